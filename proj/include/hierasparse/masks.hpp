// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hierasparse/errors.hpp"
#include "hierasparse/nm_metadata.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

// Which way the N:M groups run inside a block.  Both caches are pruned along
// their GEMM reduction dimension: the key cache reduces over the head
// dimension (groups of m_group consecutive channels per token), the value
// cache — used transposed — reduces over the sequence (groups of m_group
// consecutive tokens per channel within a block).
enum class GroupAxis : std::uint16_t {
    kChannel = 0,   // groups along columns of the logical block (key cache)
    kSequence = 1,  // groups along rows of the logical block (value cache)
};

// Per-element keep mask, same logical shape as the masked tensor (1 = kept).
struct ElementMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;  // rows * cols, row-major

    ElementMask() = default;
    ElementMask(std::size_t r, std::size_t c, std::uint8_t fill = 1)
        : rows(r), cols(c), bits(r * c, fill) {}

    bool at(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
    void set(std::size_t r, std::size_t c, bool kept) {
        bits[r * cols + c] = kept ? 1 : 0;
    }

    bool operator==(const ElementMask&) const = default;
};

// Applies a keep mask: kept elements pass through, pruned elements become 0.
inline Tensor2D apply_element_mask(const Tensor2D& x, const ElementMask& m) {
    detail::check_config(x.rows == m.rows && x.cols == m.cols,
                         "apply_element_mask: shape mismatch");
    Tensor2D y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        y.data[i] = m.bits[i] ? x.data[i] : 0.0f;
    }
    return y;
}

// Per-block dense/sparse decision with the block losses that drove it.
// flags[b] = true keeps block b dense; false prunes it to N:M sparse.
struct BlockMask {
    std::vector<std::uint8_t> flags;  // 1 = dense
    std::vector<double> losses;       // L1 magnitude lost if block b goes sparse

    std::size_t block_count() const { return flags.size(); }
    bool is_dense(std::size_t b) const { return flags[b] != 0; }

    std::size_t dense_count() const {
        std::size_t n = 0;
        for (std::uint8_t f : flags) n += (f != 0);
        return n;
    }
    std::size_t sparse_count() const { return flags.size() - dense_count(); }
};

// Full pruning configuration: block sparsity targets per cache, block
// geometry, the N:M pattern, and the protected regions that always stay
// dense (leading "sink" tokens, trailing local window).
struct SparsityConfig {
    double s_key = 0.0;            // S_K: fraction of prunable key blocks made sparse
    double s_value = 0.0;          // S_V: same for value blocks
    std::size_t block_size = 64;   // B, tokens per block
    NmPattern pattern;
    std::size_t sink_tokens = 0;   // leading tokens kept dense (rounded up to blocks)
    std::size_t local_window = 0;  // trailing tokens kept dense (rounded up to blocks)

    void validate() const {
        pattern.validate();
        detail::check_config(s_key >= 0.0 && s_key <= 1.0,
                             "SparsityConfig: s_key outside [0, 1]");
        detail::check_config(s_value >= 0.0 && s_value <= 1.0,
                             "SparsityConfig: s_value outside [0, 1]");
        detail::check_config(block_size > 0 && block_size % pattern.m_group == 0,
                             "SparsityConfig: block_size must be a positive multiple "
                             "of m_group");
    }

    // Protected token counts rounded up to whole blocks.
    std::size_t protected_prefix_blocks() const {
        return (sink_tokens + block_size - 1) / block_size;
    }
    std::size_t protected_suffix_blocks() const {
        return (local_window + block_size - 1) / block_size;
    }
};

} // namespace hierasparse
