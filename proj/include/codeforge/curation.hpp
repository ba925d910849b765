#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codeforge/corpus.hpp"

namespace codeforge {

// Distinct, normalized lines of a snippet, kept sorted.
struct LineSet {
    std::vector<std::string> lines;

    std::size_t size() const noexcept { return lines.size(); }
    bool contains(std::string_view line) const;
    bool operator==(const LineSet&) const = default;
};

/// Splits on '\n', strips trailing whitespace, keeps indentation, drops
/// empty lines and duplicates.
LineSet split_lines(std::string_view source_text);

/// Size of the symmetric difference.
std::size_t structure_distance(const LineSet& a, const LineSet& b);

/// 1 iff structure_distance(a, b) >= gamma * min(|a|, |b|). Throws ConfigError for gamma <= 0.
int distinct_indicator(const LineSet& a, const LineSet& b, double gamma);

struct CurationConfig {
    double gamma = 1.0;
    std::size_t subset_cap = 400;
    std::size_t iterations = 5;
    std::uint64_t rng_seed = 17;
    std::size_t threads = 0;  // 0: hardware concurrency

    void validate() const;
};

class DistinctnessGraph {
public:
    DistinctnessGraph() = default;
    explicit DistinctnessGraph(std::vector<std::string> vertices);

    /// Edge (i, j) iff distinct_indicator(sets[i], sets[j], gamma) == 1.
    static DistinctnessGraph build(std::vector<std::string> vertices, const std::vector<LineSet>& sets, double gamma);

    void add_edge(std::size_t i, std::size_t j);
    bool has_edge(std::size_t i, std::size_t j) const;

    const std::vector<std::string>& vertices() const noexcept { return vertices_; }
    std::size_t size() const noexcept { return vertices_.size(); }
    std::size_t edge_count() const;
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;
    const std::vector<std::uint64_t>& row(std::size_t i) const { return adjacency_[i]; }

private:
    std::vector<std::string> vertices_;
    std::vector<std::vector<std::uint64_t>> adjacency_;
};

struct CliqueResult {
    std::vector<std::string> member_ids;  // sorted
    bool certified = false;
};

/// Exact maximum clique; among maxima the lexicographically smallest id set.
/// Throws BudgetError if the graph has more than `budget` vertices.
CliqueResult maximum_clique(const DistinctnessGraph& graph, std::size_t budget = 400);

/// Same search on vertex indices. `rank` is a permutation of 0..n-1; among
/// maximum cliques the one whose sorted ranks are lexicographically smallest
/// wins. Returns member indices in ascending rank order.
std::vector<std::size_t> maximum_clique_indices(const DistinctnessGraph& graph,
                                                const std::vector<std::size_t>& rank);

struct CurationStats {
    std::size_t input_n = 0;
    std::size_t output_n = 0;
    std::vector<std::size_t> sizes_per_iteration;  // working-set size after each iteration
};

std::vector<CodeSnippet> curate(const std::vector<CodeSnippet>& snippets, const CurationConfig& config,
                                CurationStats* stats = nullptr);

}  // namespace codeforge
