#include "codeforge/curation.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <unordered_map>

#include "codeforge/errors.hpp"
#include "codeforge/parallel.hpp"
#include "codeforge/random.hpp"

namespace codeforge {

namespace {

std::string_view rstrip(std::string_view s) {
    std::size_t end = s.size();
    while (end > 0 && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r' || s[end - 1] == '\f' ||
                       s[end - 1] == '\v')) {
        --end;
    }
    return s.substr(0, end);
}

template <class Seq>
std::size_t symmetric_difference_size(const Seq& a, const Seq& b) {
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++common;
            ++i;
            ++j;
        }
    }
    return a.size() + b.size() - 2 * common;
}

bool indicator_from(std::size_t d, std::size_t size_a, std::size_t size_b, double gamma) {
    // Identical line sets are never distinct, including the 0 >= 0 case of two empty sets.
    if (d == 0) return false;
    return static_cast<double>(d) >= gamma * static_cast<double>(std::min(size_a, size_b));
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
}

// Fixed-width bitset over a component's local vertex indices.
class Bits {
public:
    explicit Bits(std::size_t n = 0) : words_((n + 63) / 64, 0) {}

    void set(std::size_t i) { words_[i >> 6] |= 1ULL << (i & 63); }
    void reset(std::size_t i) { words_[i >> 6] &= ~(1ULL << (i & 63)); }
    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1ULL; }

    bool any() const {
        for (auto w : words_) {
            if (w) return true;
        }
        return false;
    }
    std::size_t count() const {
        std::size_t c = 0;
        for (auto w : words_) c += std::popcount(w);
        return c;
    }
    std::size_t first() const {
        for (std::size_t k = 0; k < words_.size(); ++k) {
            if (words_[k]) return (k << 6) + std::countr_zero(words_[k]);
        }
        return SIZE_MAX;
    }
    Bits operator&(const Bits& o) const {
        Bits r = *this;
        for (std::size_t k = 0; k < words_.size(); ++k) r.words_[k] &= o.words_[k];
        return r;
    }
    Bits& and_not(const Bits& o) {
        for (std::size_t k = 0; k < words_.size(); ++k) words_[k] &= ~o.words_[k];
        return *this;
    }

private:
    std::vector<std::uint64_t> words_;
};

// Colour-bounded branch and bound over bitsets (greedy sequential colouring
// gives an upper bound on the clique size inside a candidate set).
class CliqueSearch {
public:
    explicit CliqueSearch(std::vector<Bits> adjacency) : adj_(std::move(adjacency)) {}

    std::size_t max_size(const Bits& candidates) {
        best_ = 0;
        stop_at_ = SIZE_MAX;
        expand(candidates, 0);
        return best_;
    }

    bool has_clique(const Bits& candidates, std::size_t k) {
        if (k == 0) return true;
        if (candidates.count() < k) return false;
        best_ = k - 1;
        stop_at_ = k;
        expand(candidates, 0);
        return best_ >= k;
    }

private:
    void colour(const Bits& p, std::vector<std::size_t>& order, std::vector<std::size_t>& colours) const {
        order.clear();
        colours.clear();
        Bits uncoloured = p;
        std::size_t c = 0;
        while (uncoloured.any()) {
            ++c;
            Bits q = uncoloured;
            while (q.any()) {
                const std::size_t v = q.first();
                q.reset(v);
                uncoloured.reset(v);
                q.and_not(adj_[v]);
                order.push_back(v);
                colours.push_back(c);
            }
        }
    }

    void expand(Bits p, std::size_t depth) {
        std::vector<std::size_t> order;
        std::vector<std::size_t> colours;
        colour(p, order, colours);
        for (std::size_t i = order.size(); i-- > 0;) {
            if (best_ >= stop_at_) return;
            if (depth + colours[i] <= best_) return;
            const std::size_t v = order[i];
            Bits next = p & adj_[v];
            if (next.any()) {
                expand(next, depth + 1);
            } else if (depth + 1 > best_) {
                best_ = depth + 1;
            }
            p.reset(v);
        }
    }

    std::vector<Bits> adj_;
    std::size_t best_ = 0;
    std::size_t stop_at_ = SIZE_MAX;
};

// Lexicographically smallest (by rank) maximum clique of the subgraph induced
// by `members`.
std::vector<std::size_t> component_clique(const DistinctnessGraph& g, std::vector<std::size_t> members,
                                          const std::vector<std::size_t>& rank) {
    if (members.size() == 1) return members;
    const std::size_t m = members.size();
    // Local labels in descending-degree order help the colouring bound.
    std::vector<std::size_t> degree(m, 0);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            if (g.has_edge(members[a], members[b])) {
                ++degree[a];
                ++degree[b];
            }
        }
    }
    std::vector<std::size_t> local(m);
    std::iota(local.begin(), local.end(), 0);
    std::sort(local.begin(), local.end(), [&](std::size_t a, std::size_t b) {
        if (degree[a] != degree[b]) return degree[a] > degree[b];
        return rank[members[a]] < rank[members[b]];
    });
    std::vector<std::size_t> vertex(m);  // local label -> graph index
    for (std::size_t l = 0; l < m; ++l) vertex[l] = members[local[l]];

    std::vector<Bits> adj(m, Bits(m));
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            if (g.has_edge(vertex[a], vertex[b])) {
                adj[a].set(b);
                adj[b].set(a);
            }
        }
    }
    std::vector<std::size_t> by_rank(m);  // local labels in ascending rank
    std::iota(by_rank.begin(), by_rank.end(), 0);
    std::sort(by_rank.begin(), by_rank.end(),
              [&](std::size_t a, std::size_t b) { return rank[vertex[a]] < rank[vertex[b]]; });

    CliqueSearch search(adj);
    Bits all(m);
    for (std::size_t l = 0; l < m; ++l) all.set(l);
    std::size_t need = search.max_size(all);

    // Greedy: each next member is the smallest-rank vertex that still
    // extends to a clique of the maximum size using only later-ranked vertices.
    std::vector<std::size_t> chosen;
    Bits candidates = all;
    Bits later = all;  // vertices ranked after the last choice
    std::size_t pos = 0;
    while (need > 0) {
        bool extended = false;
        for (; pos < m; ++pos) {
            const std::size_t v = by_rank[pos];
            later.reset(v);
            if (!candidates.test(v)) continue;
            Bits rest = candidates & adj[v] & later;
            if (rest.count() + 1 < need) continue;
            if (search.has_clique(rest, need - 1)) {
                chosen.push_back(vertex[v]);
                candidates = rest;
                --need;
                ++pos;
                extended = true;
                break;
            }
        }
        if (!extended) throw Error("clique reconstruction failed");
    }
    return chosen;
}

}  // namespace

bool LineSet::contains(std::string_view line) const {
    return std::binary_search(lines.begin(), lines.end(), line,
                              [](std::string_view a, std::string_view b) { return a < b; });
}

LineSet split_lines(std::string_view source_text) {
    LineSet set;
    std::size_t start = 0;
    while (start <= source_text.size()) {
        std::size_t nl = source_text.find('\n', start);
        if (nl == std::string_view::npos) nl = source_text.size();
        const std::string_view line = rstrip(source_text.substr(start, nl - start));
        if (!line.empty()) set.lines.emplace_back(line);
        start = nl + 1;
    }
    std::sort(set.lines.begin(), set.lines.end());
    set.lines.erase(std::unique(set.lines.begin(), set.lines.end()), set.lines.end());
    return set;
}

std::size_t structure_distance(const LineSet& a, const LineSet& b) {
    return symmetric_difference_size(a.lines, b.lines);
}

int distinct_indicator(const LineSet& a, const LineSet& b, double gamma) {
    check_gamma(gamma);
    return indicator_from(structure_distance(a, b), a.size(), b.size(), gamma) ? 1 : 0;
}

void CurationConfig::validate() const {
    check_gamma(gamma);
    if (subset_cap < 2) throw ConfigError("subset_cap must be >= 2");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
}

DistinctnessGraph::DistinctnessGraph(std::vector<std::string> vertices)
    : vertices_(std::move(vertices)),
      adjacency_(vertices_.size(), std::vector<std::uint64_t>((vertices_.size() + 63) / 64, 0)) {}

DistinctnessGraph DistinctnessGraph::build(std::vector<std::string> vertices, const std::vector<LineSet>& sets,
                                           double gamma) {
    check_gamma(gamma);
    if (sets.size() != vertices.size()) throw Error("vertex and line-set counts differ");
    DistinctnessGraph g(std::move(vertices));
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            if (distinct_indicator(sets[i], sets[j], gamma)) g.add_edge(i, j);
        }
    }
    return g;
}

void DistinctnessGraph::add_edge(std::size_t i, std::size_t j) {
    if (i == j) return;
    adjacency_[i][j >> 6] |= 1ULL << (j & 63);
    adjacency_[j][i >> 6] |= 1ULL << (i & 63);
}

bool DistinctnessGraph::has_edge(std::size_t i, std::size_t j) const {
    return (adjacency_[i][j >> 6] >> (j & 63)) & 1ULL;
}

std::size_t DistinctnessGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& row : adjacency_) {
        for (auto w : row) twice += std::popcount(w);
    }
    return twice / 2;
}

std::vector<std::pair<std::size_t, std::size_t>> DistinctnessGraph::edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = i + 1; j < size(); ++j) {
            if (has_edge(i, j)) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<std::size_t> maximum_clique_indices(const DistinctnessGraph& graph, const std::vector<std::size_t>& rank) {
    const std::size_t n = graph.size();
    if (rank.size() != n) throw Error("rank size does not match graph");
    if (n == 0) return {};

    // Vertices in different components of the complement graph are all
    // mutually adjacent, so the maximum clique is the union of per-component
    // maximum cliques, and per-component rank minima give the global minimum.
    std::vector<std::size_t> component(n, SIZE_MAX);
    std::vector<std::vector<std::size_t>> components;
    for (std::size_t s = 0; s < n; ++s) {
        if (component[s] != SIZE_MAX) continue;
        const std::size_t c = components.size();
        components.emplace_back();
        std::vector<std::size_t> stack{s};
        component[s] = c;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            components[c].push_back(u);
            for (std::size_t v = 0; v < n; ++v) {
                if (component[v] == SIZE_MAX && v != u && !graph.has_edge(u, v)) {
                    component[v] = c;
                    stack.push_back(v);
                }
            }
        }
    }

    std::vector<std::size_t> clique;
    for (auto& members : components) {
        std::sort(members.begin(), members.end());
        const std::vector<std::size_t> part = component_clique(graph, members, rank);
        clique.insert(clique.end(), part.begin(), part.end());
    }
    std::sort(clique.begin(), clique.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
    return clique;
}

CliqueResult maximum_clique(const DistinctnessGraph& graph, std::size_t budget) {
    if (graph.size() > budget) {
        throw BudgetError("graph has " + std::to_string(graph.size()) + " vertices; exact search budget is " +
                          std::to_string(budget));
    }
    const auto& ids = graph.vertices();
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    std::vector<std::size_t> rank(ids.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    CliqueResult result;
    for (std::size_t v : maximum_clique_indices(graph, rank)) result.member_ids.push_back(ids[v]);
    result.certified = true;
    return result;
}

std::vector<CodeSnippet> curate(const std::vector<CodeSnippet>& snippets, const CurationConfig& config,
                                CurationStats* stats) {
    config.validate();
    const std::size_t n = snippets.size();
    if (stats) {
        *stats = CurationStats{};
        stats->input_n = n;
    }
    if (n <= 1) {
        if (stats) stats->output_n = n;
        return snippets;
    }

    // Intern lines once; every distance afterwards is a merge over integers.
    std::unordered_map<std::string, std::uint32_t> intern;
    std::vector<std::vector<std::uint32_t>> sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::string& line : split_lines(snippets[i].source_text).lines) {
            const auto [it, inserted] = intern.try_emplace(std::move(line), static_cast<std::uint32_t>(intern.size()));
            sets[i].push_back(it->second);
        }
        std::sort(sets[i].begin(), sets[i].end());
    }

    // Global order by (id, input position) drives tie-breaks and output order.
    std::vector<std::size_t> global(n);
    std::iota(global.begin(), global.end(), 0);
    std::stable_sort(global.begin(), global.end(),
                     [&](std::size_t a, std::size_t b) { return snippets[a].id < snippets[b].id; });
    std::vector<std::size_t> global_rank(n);
    for (std::size_t r = 0; r < n; ++r) global_rank[global[r]] = r;

    Rng rng(derive_seed(config.rng_seed, "curate"));
    std::vector<std::size_t> working = global;
    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        rng.shuffle(working);
        const std::size_t chunks = (working.size() + config.subset_cap - 1) / config.subset_cap;
        std::vector<std::vector<std::size_t>> kept(chunks);
        parallel_for(chunks, config.threads, [&](std::size_t c) {
            const std::size_t begin = c * config.subset_cap;
            const std::size_t end = std::min(begin + config.subset_cap, working.size());
            std::vector<std::size_t> subset(working.begin() + begin, working.begin() + end);
            std::sort(subset.begin(), subset.end(),
                      [&](std::size_t a, std::size_t b) { return global_rank[a] < global_rank[b]; });
            const std::size_t m = subset.size();
            std::vector<std::string> ids(m);
            for (std::size_t k = 0; k < m; ++k) ids[k] = snippets[subset[k]].id;
            DistinctnessGraph g(std::move(ids));
            for (std::size_t a = 0; a < m; ++a) {
                const auto& sa = sets[subset[a]];
                for (std::size_t b = a + 1; b < m; ++b) {
                    const auto& sb = sets[subset[b]];
                    if (indicator_from(symmetric_difference_size(sa, sb), sa.size(), sb.size(), config.gamma)) {
                        g.add_edge(a, b);
                    }
                }
            }
            std::vector<std::size_t> local_rank(m);
            std::iota(local_rank.begin(), local_rank.end(), 0);
            for (std::size_t v : maximum_clique_indices(g, local_rank)) kept[c].push_back(subset[v]);
        });
        working.clear();
        for (const auto& part : kept) working.insert(working.end(), part.begin(), part.end());
        std::sort(working.begin(), working.end(),
                  [&](std::size_t a, std::size_t b) { return global_rank[a] < global_rank[b]; });
        if (stats) stats->sizes_per_iteration.push_back(working.size());
    }

    std::vector<CodeSnippet> out;
    out.reserve(working.size());
    for (std::size_t i : working) out.push_back(snippets[i]);
    if (stats) stats->output_n = out.size();
    return out;
}

}  // namespace codeforge
