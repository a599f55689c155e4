#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace pom {

/// Which context tokens each query may mix.
///
/// Causal and BlockCausal(K) follow the 1-indexed rule: query i sees context
/// j iff j <= ceil(i / K) * K, so every token sees its whole block. Causal is
/// BlockCausal(1). Padding marks valid context tokens per batch entry; Full is
/// an explicit batch x queries x context pattern.
class MaskSpec {
public:
    enum class Kind : std::uint8_t { none, causal, block_causal, padding, full };

    MaskSpec() = default;

    static MaskSpec none() { return MaskSpec(); }
    static MaskSpec causal();
    static MaskSpec block_causal(std::size_t block);
    /// `valid` is batch x n, entries 0 or 1.
    static MaskSpec padding(std::size_t batch, std::size_t n, std::vector<int> valid);
    /// `bits` is batch x queries x context, entries 0 or 1.
    static MaskSpec full(std::size_t batch, std::size_t queries, std::size_t context, std::vector<int> bits);

    Kind kind() const;
    bool is_causal_family() const { return kind() == Kind::causal || kind() == Kind::block_causal; }
    /// Block size K of the causal family (1 for Causal).
    std::size_t block() const;
    /// Query count of a Full mask (0 for other kinds).
    std::size_t full_queries() const;

    /// Number of leading context tokens visible to 0-indexed query i (causal family).
    std::size_t visible_prefix(std::size_t query, std::size_t context) const;

    bool visible(std::size_t batch, std::size_t query, std::size_t context_index, std::size_t context_len) const;

    /// Number of rows the mixed state has for m queries: 1 for none/padding, m otherwise.
    std::size_t state_rows(std::size_t queries) const;

    /// Throws ShapeError when the mask cannot apply to batch x queries x context.
    void validate(std::size_t batch, std::size_t queries, std::size_t context) const;

    std::string describe() const;

private:
    struct None {};
    struct Causal {};
    struct BlockCausal {
        std::size_t block;
    };
    struct Padding {
        std::size_t batch;
        std::size_t n;
        std::vector<std::uint8_t> valid;
    };
    struct Full {
        std::size_t batch;
        std::size_t queries;
        std::size_t context;
        std::vector<std::uint8_t> bits;
    };

    std::variant<None, Causal, BlockCausal, Padding, Full> v_;
};

}  // namespace pom
