#include <doctest.h>

#include <algorithm>
#include <set>

#include "codeforge/curation.hpp"
#include "codeforge/errors.hpp"
#include "codeforge/random.hpp"

using namespace codeforge;

namespace {

LineSet set_of(std::vector<std::string> lines) {
    std::sort(lines.begin(), lines.end());
    return LineSet{lines};
}

DistinctnessGraph random_graph(std::size_t n, double p, Rng& rng) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("v" + std::string(1, static_cast<char>('a' + i)));
    DistinctnessGraph g(ids);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng.bernoulli(p)) g.add_edge(i, j);
        }
    }
    return g;
}

// Exhaustive oracle: every vertex subset, largest clique, ties by the
// lexicographically smallest sorted id list.
std::vector<std::string> brute_force_clique(const DistinctnessGraph& g) {
    const std::size_t n = g.size();
    std::vector<std::string> best;
    bool have = false;
    for (std::uint32_t mask = 1; mask < (1U << n); ++mask) {
        bool clique = true;
        for (std::size_t i = 0; i < n && clique; ++i) {
            if (!(mask >> i & 1)) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if ((mask >> j & 1) && !g.has_edge(i, j)) {
                    clique = false;
                    break;
                }
            }
        }
        if (!clique) continue;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1) ids.push_back(g.vertices()[i]);
        }
        std::sort(ids.begin(), ids.end());
        if (!have || ids.size() > best.size() || (ids.size() == best.size() && ids < best)) {
            best = ids;
            have = true;
        }
    }
    return best;
}

CodeSnippet snippet(const std::string& id, const std::string& source) { return CodeSnippet::make(id, source); }

}  // namespace

TEST_SUITE("curation") {
    TEST_CASE("split_lines normalizes and deduplicates") {
        CHECK(split_lines("a=1\nb=2\na=1") == set_of({"a=1", "b=2"}));
        CHECK(split_lines("").size() == 0);
        CHECK(split_lines("  x=1  \n\n  x=1") == set_of({"  x=1"}));
        CHECK(split_lines("x\r\n\t\ny \n") == set_of({"x", "y"}));
        CHECK(split_lines("  a\na") == set_of({"  a", "a"}));
    }

    TEST_CASE("structure distance is the symmetric difference size") {
        CHECK(structure_distance(set_of({"a", "b", "c"}), set_of({"b", "c", "d"})) == 2);
        const LineSet s = set_of({"a", "b"});
        CHECK(structure_distance(s, s) == 0);
        CHECK(structure_distance(set_of({"a", "b"}), set_of({"c", "d", "e"})) == 5);
        CHECK(structure_distance(set_of({}), set_of({"x"})) == 1);
    }

    TEST_CASE("distance is symmetric and non-negative on random sets") {
        Rng rng(5);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::string> a, b;
            for (int k = 0; k < 8; ++k) {
                if (rng.bernoulli(0.5)) a.push_back("l" + std::to_string(k));
                if (rng.bernoulli(0.5)) b.push_back("l" + std::to_string(k));
            }
            const LineSet sa = set_of(a), sb = set_of(b);
            std::vector<std::string> diff;
            std::set_symmetric_difference(sa.lines.begin(), sa.lines.end(), sb.lines.begin(), sb.lines.end(),
                                          std::back_inserter(diff));
            CHECK(structure_distance(sa, sb) == diff.size());
            CHECK(structure_distance(sa, sb) == structure_distance(sb, sa));
            CHECK(structure_distance(sa, sa) == 0);
        }
    }

    TEST_CASE("distinct indicator thresholds on the smaller set") {
        // |a| = 3, |b| = 4, d = 3
        CHECK(distinct_indicator(set_of({"a", "b", "c"}), set_of({"a", "b", "x", "y"}), 1.0) == 1);
        // Sizes 3 and 4 always give an odd distance, so d = 1 is the largest non-distinct case.
        CHECK(distinct_indicator(set_of({"a", "b", "c"}), set_of({"a", "b", "c", "x"}), 1.0) == 0);
        // d = 2 below the threshold 3 * 1
        CHECK(distinct_indicator(set_of({"a", "b", "c"}), set_of({"a", "b", "c", "x", "y"}), 1.0) == 0);
        CHECK(distinct_indicator(set_of({"a", "b", "c"}), set_of({"a", "b", "c"}), 1.0) == 0);
        CHECK(distinct_indicator(set_of({}), set_of({}), 1.0) == 0);
        CHECK(distinct_indicator(set_of({"a", "b", "c"}), set_of({"a", "b", "c", "x", "y"}), 0.5) == 1);
        CHECK_THROWS_AS(distinct_indicator(set_of({"a"}), set_of({"b"}), 0.0), ConfigError);
        CHECK_THROWS_AS(distinct_indicator(set_of({"a"}), set_of({"b"}), -1.0), ConfigError);
    }

    TEST_CASE("graph build follows the indicator") {
        const std::vector<LineSet> sets = {set_of({"a", "b"}), set_of({"a", "b"}), set_of({"c", "d"})};
        const DistinctnessGraph g = DistinctnessGraph::build({"x", "y", "z"}, sets, 1.0);
        CHECK_FALSE(g.has_edge(0, 1));
        CHECK(g.has_edge(0, 2));
        CHECK(g.has_edge(2, 1));
        CHECK(g.edge_count() == 2);
        CHECK_FALSE(g.has_edge(0, 0));
    }

    TEST_CASE("small clique examples") {
        DistinctnessGraph triangle({"a", "b", "c"});
        triangle.add_edge(0, 1);
        triangle.add_edge(1, 2);
        triangle.add_edge(0, 2);
        CHECK(maximum_clique(triangle).member_ids == std::vector<std::string>{"a", "b", "c"});

        DistinctnessGraph path({"c", "b", "a"});
        path.add_edge(2, 1);  // a-b
        path.add_edge(1, 0);  // b-c
        const CliqueResult r = maximum_clique(path);
        CHECK(r.member_ids == std::vector<std::string>{"a", "b"});
        CHECK(r.certified);

        DistinctnessGraph empty({"d", "b", "c", "a"});
        CHECK(maximum_clique(empty).member_ids == std::vector<std::string>{"a"});
        CHECK(maximum_clique(DistinctnessGraph{}).member_ids.empty());
    }

    TEST_CASE("exact search refuses graphs above budget") {
        DistinctnessGraph g(std::vector<std::string>(5, "v"));
        CHECK_THROWS_AS(maximum_clique(g, 4), BudgetError);
        CHECK_NOTHROW(maximum_clique(g, 5));
    }

    TEST_CASE("clique matches exhaustive search including tie-break") {
        Rng rng(2024);
        int graphs = 0;
        for (double p : {0.2, 0.5, 0.8}) {
            for (int k = 0; k < 40; ++k) {
                const std::size_t n = 1 + rng.below(12);
                const DistinctnessGraph g = random_graph(n, p, rng);
                CAPTURE(n);
                CAPTURE(p);
                CHECK(maximum_clique(g).member_ids == brute_force_clique(g));
                ++graphs;
            }
        }
        CHECK(graphs == 120);
    }

    TEST_CASE("clique members are pairwise adjacent in a larger random graph") {
        Rng rng(99);
        const DistinctnessGraph g = random_graph(26, 0.6, rng);
        const CliqueResult r = maximum_clique(g);
        std::vector<std::size_t> idx;
        for (const auto& id : r.member_ids) {
            idx.push_back(static_cast<std::size_t>(std::find(g.vertices().begin(), g.vertices().end(), id) -
                                                   g.vertices().begin()));
        }
        for (std::size_t a = 0; a < idx.size(); ++a) {
            for (std::size_t b = a + 1; b < idx.size(); ++b) CHECK(g.has_edge(idx[a], idx[b]));
        }
        CHECK(idx.size() >= 4);
    }

    TEST_CASE("identical snippets collapse to one") {
        std::vector<CodeSnippet> snippets;
        for (int i = 0; i < 50; ++i) snippets.push_back(snippet("s" + std::to_string(100 + i), "x = 1\ny = 2\n"));
        const auto out = curate(snippets, CurationConfig{});
        REQUIRE(out.size() == 1);
        CHECK(out[0].id == "s100");
    }

    TEST_CASE("mutually distinct snippets all survive") {
        std::vector<CodeSnippet> snippets;
        for (int i = 0; i < 10; ++i) {
            snippets.push_back(snippet("d" + std::to_string(i), "a" + std::to_string(i) + " = 1\nb" +
                                                                    std::to_string(i) + " = 2\n"));
        }
        CurationStats stats;
        const auto out = curate(snippets, CurationConfig{}, &stats);
        CHECK(out.size() == 10);
        CHECK(stats.input_n == 10);
        CHECK(stats.output_n == 10);
        CHECK(stats.sizes_per_iteration.size() == 5);
    }

    TEST_CASE("curation is deterministic, idempotent and never fabricates") {
        Rng rng(7);
        std::vector<CodeSnippet> snippets;
        for (int i = 0; i < 120; ++i) {
            std::string src;
            const int family = static_cast<int>(rng.below(30));
            for (int l = 0; l < 6; ++l) src += "f" + std::to_string(family) + "_" + std::to_string(l) + " = 0\n";
            if (rng.bernoulli(0.5)) src += "extra_" + std::to_string(i) + " = 1\n";
            snippets.push_back(snippet("id" + std::to_string(i), src));
        }
        CurationConfig small;
        small.subset_cap = 25;
        const auto first = curate(snippets, small);
        const auto second = curate(snippets, small);
        CHECK(first == second);
        std::set<std::string> input_ids;
        for (const auto& s : snippets) input_ids.insert(s.id);
        for (const auto& s : first) CHECK(input_ids.count(s.id) == 1);
        CHECK(std::is_sorted(first.begin(), first.end(),
                             [](const CodeSnippet& a, const CodeSnippet& b) { return a.id < b.id; }));

        CurationConfig full;
        full.subset_cap = 400;
        const auto once = curate(snippets, full);
        CHECK(curate(once, full) == once);
        for (std::size_t a = 0; a < once.size(); ++a) {
            for (std::size_t b = a + 1; b < once.size(); ++b) {
                CHECK(distinct_indicator(split_lines(once[a].source_text), split_lines(once[b].source_text), 1.0) ==
                      1);
            }
        }
        CHECK(once.size() == 30);
    }

    TEST_CASE("different seeds may pick different subsets but stay valid") {
        std::vector<CodeSnippet> snippets;
        for (int i = 0; i < 40; ++i) snippets.push_back(snippet("k" + std::to_string(i), "same\nline_" + std::to_string(i % 8) + "\n"));
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            CurationConfig c;
            c.rng_seed = seed;
            c.subset_cap = 10;
            const auto out = curate(snippets, c);
            CHECK(out.size() >= 1);
            CHECK(out.size() <= 8);
        }
    }

    TEST_CASE("single snippet and empty input pass through") {
        const std::vector<CodeSnippet> one = {snippet("only", "x = 1\n")};
        CHECK(curate(one, CurationConfig{}) == one);
        CHECK(curate({}, CurationConfig{}).empty());
    }

    TEST_CASE("invalid configs are rejected") {
        CurationConfig c;
        c.subset_cap = 1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = CurationConfig{};
        c.iterations = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = CurationConfig{};
        c.gamma = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}
