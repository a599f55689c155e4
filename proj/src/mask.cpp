#include "pom/mask.hpp"

#include <algorithm>
#include <stdexcept>

#include "pom/tensor.hpp"

namespace pom {

namespace {
std::vector<std::uint8_t> to_bits(const std::vector<int>& values, std::size_t expected, const char* what) {
    if (values.size() != expected) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) + " entries, got " +
                         std::to_string(values.size()));
    }
    std::vector<std::uint8_t> bits(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != 0 && values[i] != 1) {
            throw std::invalid_argument(std::string(what) + ": entries must be 0 or 1, got " +
                                        std::to_string(values[i]) + " at " + std::to_string(i));
        }
        bits[i] = static_cast<std::uint8_t>(values[i]);
    }
    return bits;
}
}  // namespace

MaskSpec MaskSpec::causal() {
    MaskSpec m;
    m.v_ = Causal{};
    return m;
}

MaskSpec MaskSpec::block_causal(std::size_t block) {
    if (block == 0) throw std::invalid_argument("block-causal mask needs a block size >= 1");
    MaskSpec m;
    m.v_ = BlockCausal{block};
    return m;
}

MaskSpec MaskSpec::padding(std::size_t batch, std::size_t n, std::vector<int> valid) {
    MaskSpec m;
    m.v_ = Padding{batch, n, to_bits(valid, batch * n, "padding mask")};
    return m;
}

MaskSpec MaskSpec::full(std::size_t batch, std::size_t queries, std::size_t context, std::vector<int> bits) {
    MaskSpec m;
    m.v_ = Full{batch, queries, context, to_bits(bits, batch * queries * context, "full mask")};
    return m;
}

MaskSpec::Kind MaskSpec::kind() const { return static_cast<Kind>(v_.index()); }

std::size_t MaskSpec::block() const {
    if (std::holds_alternative<Causal>(v_)) return 1;
    if (const auto* b = std::get_if<BlockCausal>(&v_)) return b->block;
    throw std::logic_error("block() requires a causal or block-causal mask");
}

std::size_t MaskSpec::visible_prefix(std::size_t query, std::size_t context) const {
    const std::size_t k = block();
    const std::size_t end = ((query + k) / k) * k;  // ceil((query+1)/k)*k
    return std::min(end, context);
}

bool MaskSpec::visible(std::size_t batch, std::size_t query, std::size_t j, std::size_t context_len) const {
    switch (kind()) {
        case Kind::none:
            return true;
        case Kind::causal:
        case Kind::block_causal:
            return j < visible_prefix(query, context_len);
        case Kind::padding: {
            const auto& p = std::get<Padding>(v_);
            return p.valid[batch * p.n + j] != 0;
        }
        case Kind::full: {
            const auto& f = std::get<Full>(v_);
            return f.bits[(batch * f.queries + query) * f.context + j] != 0;
        }
    }
    return false;
}

std::size_t MaskSpec::state_rows(std::size_t queries) const {
    return (kind() == Kind::none || kind() == Kind::padding) ? 1 : queries;
}

void MaskSpec::validate(std::size_t batch, std::size_t queries, std::size_t context) const {
    switch (kind()) {
        case Kind::none:
            return;
        case Kind::causal:
        case Kind::block_causal:
            if (queries != context) {
                throw ShapeError(describe() + " mask needs as many queries as context tokens, got " +
                                 std::to_string(queries) + " queries and " + std::to_string(context) + " context");
            }
            return;
        case Kind::padding: {
            const auto& p = std::get<Padding>(v_);
            if (p.batch != batch || p.n != context) {
                throw ShapeError("padding mask is [" + std::to_string(p.batch) + "x" + std::to_string(p.n) +
                                 "] but context is [" + std::to_string(batch) + "x" + std::to_string(context) + "]");
            }
            return;
        }
        case Kind::full: {
            const auto& f = std::get<Full>(v_);
            if (f.batch != batch || f.queries != queries || f.context != context) {
                throw ShapeError("full mask is [" + std::to_string(f.batch) + "x" + std::to_string(f.queries) + "x" +
                                 std::to_string(f.context) + "] but inputs are [" + std::to_string(batch) + "x" +
                                 std::to_string(queries) + "x" + std::to_string(context) + "]");
            }
            return;
        }
    }
}

std::string MaskSpec::describe() const {
    switch (kind()) {
        case Kind::none:
            return "none";
        case Kind::causal:
            return "causal";
        case Kind::block_causal:
            return "block_causal(" + std::to_string(block()) + ")";
        case Kind::padding:
            return "padding";
        case Kind::full:
            return "full";
    }
    return "?";
}

std::size_t MaskSpec::full_queries() const {
    if (const auto* f = std::get_if<Full>(&v_)) return f->queries;
    return 0;
}

}  // namespace pom
