// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hierasparse/errors.hpp"
#include "hierasparse/masks.hpp"
#include "hierasparse/nm_metadata.hpp"
#include "hierasparse/pruner.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

// Byte sizes of one compressed cache at 16-bit-per-element accounting
// (2 bytes per pool scalar, per metadata word, and per index entry).
struct SizeBreakdown {
    std::uint64_t size_idx = 0;  // block index map
    std::uint64_t size_den = 0;  // dense pool
    std::uint64_t size_nnz = 0;  // non-zero pool
    std::uint64_t size_e = 0;    // metadata pool

    std::uint64_t total() const { return size_idx + size_den + size_nnz + size_e; }
};

// Pooled storage for one pruned cache.  Logical blocks are indexed through a
// signed 16-bit map: entry e > 0 is a dense block at pool slot e-1, e < 0 a
// sparse block at slot (-e)-1, and 0 never occurs (the +1 bias keeps slot 0
// representable on both sides).  Blocks are stored with their N:M groups
// running along contiguous columns: key-cache blocks (channel grouping) keep
// their logical block_size × d layout, value-cache blocks (sequence grouping)
// are stored transposed as d × block_size — the orientation their GEMM
// consumes them in.
struct CompressedCache {
    SparsityConfig cfg;
    GroupAxis axis = GroupAxis::kChannel;
    std::size_t head_dim = 0;        // d
    std::size_t logical_blocks = 0;

    std::vector<std::int16_t> index_map;   // one entry per logical block
    std::size_t dense_count = 0;
    std::size_t sparse_count = 0;
    std::vector<float> dense_pool;         // dense_count blocks, stored row-major
    std::vector<float> nnz_pool;           // sparse_count blocks of kept values
    std::vector<std::uint16_t> meta_pool;  // packed position codes per sparse block

    std::size_t sequence_length() const { return logical_blocks * cfg.block_size; }
    std::size_t stored_rows() const {
        return axis == GroupAxis::kChannel ? cfg.block_size : head_dim;
    }
    std::size_t stored_cols() const {
        return axis == GroupAxis::kChannel ? head_dim : cfg.block_size;
    }
    std::size_t dense_block_elems() const { return cfg.block_size * head_dim; }
    std::size_t nnz_block_elems() const {
        return dense_block_elems() * cfg.pattern.n_keep / cfg.pattern.m_group;
    }
    std::size_t groups_per_block() const { return dense_block_elems() / cfg.pattern.m_group; }
    std::size_t meta_words_per_block() const {
        return (groups_per_block() * cfg.pattern.n_keep + GroupMetadata::kCodesPerWord - 1) /
               GroupMetadata::kCodesPerWord;
    }

    // true = dense, false = sparse; entry must be validated nonzero first.
    bool block_is_dense(std::size_t b) const { return index_map[b] > 0; }
    std::size_t block_slot(std::size_t b) const {
        const std::int16_t e = index_map[b];
        detail::check_data(e != 0, "block_slot: index map holds a zero entry");
        return static_cast<std::size_t>((e > 0 ? e : -e) - 1);
    }

    // Stored-layout copy of a dense block (stored_rows × stored_cols).
    Tensor2D dense_block(std::size_t slot) const {
        detail::check_data(slot < dense_count, "dense_block: slot past the dense pool");
        Tensor2D t(stored_rows(), stored_cols());
        std::copy_n(dense_pool.begin() + static_cast<std::ptrdiff_t>(slot * dense_block_elems()),
                    dense_block_elems(), t.data.begin());
        return t;
    }

    // Kept values of a sparse block (stored_rows × stored_cols·n_keep/m_group).
    Tensor2D nnz_block(std::size_t slot) const {
        detail::check_data(slot < sparse_count, "nnz_block: slot past the sparse pool");
        Tensor2D t(stored_rows(),
                   stored_cols() * cfg.pattern.n_keep / cfg.pattern.m_group);
        std::copy_n(nnz_pool.begin() + static_cast<std::ptrdiff_t>(slot * nnz_block_elems()),
                    nnz_block_elems(), t.data.begin());
        return t;
    }

    GroupMetadata block_metadata(std::size_t slot) const {
        detail::check_data(slot < sparse_count, "block_metadata: slot past the sparse pool");
        GroupMetadata meta;
        meta.pattern = cfg.pattern;
        meta.group_count = groups_per_block();
        const std::size_t words = meta_words_per_block();
        meta.words.assign(meta_pool.begin() + static_cast<std::ptrdiff_t>(slot * words),
                          meta_pool.begin() + static_cast<std::ptrdiff_t>((slot + 1) * words));
        return meta;
    }

    // Dense-equivalent of a sparse block in stored layout.
    Tensor2D expand_stored_block(std::size_t slot) const {
        return expand_sparse(nnz_block(slot), block_metadata(slot), cfg.pattern,
                             stored_cols());
    }
};

namespace detail {

// Maximum pool slot addressable through the signed 16-bit map (slot + 1 must
// fit in int16).
inline constexpr std::size_t kMaxPoolBlocks = 32767;

inline void check_geometry(std::size_t rows, std::size_t cols, const SparsityConfig& cfg,
                           GroupAxis axis) {
    cfg.validate();
    check_config(rows % cfg.block_size == 0,
                 "compress: sequence length not divisible by block_size");
    const std::size_t group_axis_len = (axis == GroupAxis::kChannel) ? cols : cfg.block_size;
    check_config(group_axis_len % cfg.pattern.m_group == 0,
                 "compress: grouping axis not divisible by m_group");
}

// Shared assembly loop for both compression paths.  KeptOfGroup receives
// (block, stored_row, group) and must fill positions[] (ascending) and
// values[] (matching order) for that group; DenseValue receives logical
// (row, col) for dense-block copies.  Both paths touch every source element
// exactly once through these callbacks.
template <class DenseValue, class KeptOfGroup>
CompressedCache assemble_cache(std::size_t rows, std::size_t cols, const BlockMask& blocks,
                               const SparsityConfig& cfg, GroupAxis axis,
                               DenseValue&& dense_value, KeptOfGroup&& kept_of_group) {
    check_geometry(rows, cols, cfg, axis);
    const std::size_t kBlock = cfg.block_size;
    const std::size_t nblocks = rows / kBlock;
    check_config(blocks.block_count() == nblocks,
                 "compress: block mask does not cover the sequence");

    CompressedCache c;
    c.cfg = cfg;
    c.axis = axis;
    c.head_dim = cols;
    c.logical_blocks = nblocks;
    c.index_map.reserve(nblocks);

    const std::size_t srows = c.stored_rows();
    const std::size_t scols = c.stored_cols();
    const std::size_t m = cfg.pattern.m_group;
    const std::size_t n = cfg.pattern.n_keep;

    std::vector<KeptPositions> block_groups(c.groups_per_block());
    for (std::size_t b = 0; b < nblocks; ++b) {
        if (blocks.is_dense(b)) {
            check_config(c.dense_count < kMaxPoolBlocks,
                         "compress: dense pool exceeds int16 index capacity");
            for (std::size_t sr = 0; sr < srows; ++sr) {
                for (std::size_t sc = 0; sc < scols; ++sc) {
                    const std::size_t lr = (axis == GroupAxis::kChannel) ? sr : sc;
                    const std::size_t lc = (axis == GroupAxis::kChannel) ? sc : sr;
                    c.dense_pool.push_back(dense_value(b * kBlock + lr, lc));
                }
            }
            ++c.dense_count;
            c.index_map.push_back(static_cast<std::int16_t>(c.dense_count));
        } else {
            check_config(c.sparse_count < kMaxPoolBlocks,
                         "compress: sparse pool exceeds int16 index capacity");
            std::size_t gi = 0;
            float values[4];
            for (std::size_t sr = 0; sr < srows; ++sr) {
                for (std::size_t g = 0; g < scols / m; ++g) {
                    KeptPositions& pos = block_groups[gi++];
                    kept_of_group(b, sr, g, pos, values);
                    for (std::size_t i = 0; i < n; ++i) c.nnz_pool.push_back(values[i]);
                }
            }
            const GroupMetadata meta = pack_metadata(block_groups, cfg.pattern);
            c.meta_pool.insert(c.meta_pool.end(), meta.words.begin(), meta.words.end());
            ++c.sparse_count;
            c.index_map.push_back(static_cast<std::int16_t>(-static_cast<int>(c.sparse_count)));
        }
    }
    return c;
}

} // namespace detail

// Packs a cache under a precomputed hierarchical mask: dense-flagged blocks
// are copied verbatim into the dense pool, sparse-flagged blocks keep exactly
// the mask's kept elements (ascending position within each group) plus their
// packed metadata.
inline CompressedCache compress(const Tensor2D& cache, const HierarchicalMask& mask,
                                const SparsityConfig& cfg, GroupAxis axis) {
    detail::check_config(mask.element.rows == cache.rows && mask.element.cols == cache.cols,
                         "compress: element mask shape mismatch");
    const std::size_t m = cfg.pattern.m_group;
    const std::size_t n = cfg.pattern.n_keep;
    const std::size_t kBlock = cfg.block_size;

    return detail::assemble_cache(
        cache.rows, cache.cols, mask.block, cfg, axis,
        [&](std::size_t r, std::size_t col) { return cache.at(r, col); },
        [&](std::size_t b, std::size_t sr, std::size_t g, KeptPositions& pos, float* values) {
            pos.clear();
            for (std::size_t i = 0; i < m; ++i) {
                // Group element i in logical coordinates: channel grouping runs
                // along the row, sequence grouping down the column.
                const std::size_t lr =
                    (axis == GroupAxis::kChannel) ? b * kBlock + sr : b * kBlock + g * m + i;
                const std::size_t lc = (axis == GroupAxis::kChannel) ? g * m + i : sr;
                if (mask.element.at(lr, lc)) {
                    detail::check_data(pos.size() < n,
                                       "compress: group keeps more than n_keep elements");
                    values[pos.size()] = cache.at(lr, lc);
                    pos.push_back(static_cast<std::uint16_t>(i));
                }
            }
            detail::check_data(pos.size() == n,
                               "compress: group keeps fewer than n_keep elements");
        });
}

// Single-pass fast path: selects each group's top-n_keep magnitudes (ties to
// the lower index) while packing, with no precomputed element mask.  Reads
// every source element exactly once, which is what makes it the low-overhead
// path; results are identical to element_mask followed by compress.  Source
// is any (row, col) -> float accessor over the logical cache.
template <class Source>
CompressedCache fused_magnitude_compress_from(Source&& source, std::size_t rows,
                                              std::size_t cols, const BlockMask& blocks,
                                              const SparsityConfig& cfg, GroupAxis axis) {
    const std::size_t m = cfg.pattern.m_group;
    const std::size_t n = cfg.pattern.n_keep;
    const std::size_t kBlock = cfg.block_size;

    return detail::assemble_cache(
        rows, cols, blocks, cfg, axis,
        [&](std::size_t r, std::size_t c) { return source(r, c); },
        [&](std::size_t b, std::size_t sr, std::size_t g, KeptPositions& pos, float* values) {
            float group[4];
            std::size_t order[4];
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t lr =
                    (axis == GroupAxis::kChannel) ? b * kBlock + sr : b * kBlock + g * m + i;
                const std::size_t lc = (axis == GroupAxis::kChannel) ? g * m + i : sr;
                group[i] = source(lr, lc);
                order[i] = i;
            }
            std::stable_sort(order, order + m, [&](std::size_t a, std::size_t bb) {
                return std::fabs(group[a]) > std::fabs(group[bb]);
            });
            pos.assign(order, order + n);
            std::sort(pos.begin(), pos.end());
            for (std::size_t i = 0; i < n; ++i) values[i] = group[pos[i]];
        });
}

inline CompressedCache fused_magnitude_compress(const Tensor2D& cache, const BlockMask& blocks,
                                                const SparsityConfig& cfg, GroupAxis axis) {
    return fused_magnitude_compress_from(
        [&](std::size_t r, std::size_t c) { return cache.at(r, c); }, cache.rows, cache.cols,
        blocks, cfg, axis);
}

// Reconstructs the masked cache in its logical sequence-major layout: dense
// blocks verbatim, sparse blocks expanded with zeros at pruned positions.
inline Tensor2D decompress(const CompressedCache& c) {
    const std::size_t kBlock = c.cfg.block_size;
    Tensor2D out(c.sequence_length(), c.head_dim);
    detail::check_data(c.index_map.size() == c.logical_blocks,
                       "decompress: index map length mismatch");

    for (std::size_t b = 0; b < c.logical_blocks; ++b) {
        const std::int16_t e = c.index_map[b];
        detail::check_data(e != 0, "decompress: index map holds a zero entry");
        const std::size_t slot = c.block_slot(b);
        Tensor2D stored;
        if (e > 0) {
            detail::check_data(slot < c.dense_count, "decompress: dangling dense offset");
            stored = c.dense_block(slot);
        } else {
            detail::check_data(slot < c.sparse_count, "decompress: dangling sparse offset");
            stored = c.expand_stored_block(slot);
        }
        for (std::size_t sr = 0; sr < stored.rows; ++sr) {
            for (std::size_t sc = 0; sc < stored.cols; ++sc) {
                const std::size_t lr = (c.axis == GroupAxis::kChannel) ? sr : sc;
                const std::size_t lc = (c.axis == GroupAxis::kChannel) ? sc : sr;
                out.at(b * kBlock + lr, lc) = stored.at(sr, sc);
            }
        }
    }
    return out;
}

// Byte sizes at 16-bit element accounting: every pool scalar, metadata word,
// and index entry counts 2 bytes.  Reported per cache; key and value caches
// are measured separately and summed by callers.
inline SizeBreakdown measure_size(const CompressedCache& c) {
    SizeBreakdown s;
    s.size_idx = static_cast<std::uint64_t>(c.logical_blocks) * 2;
    s.size_den = static_cast<std::uint64_t>(c.dense_count) * c.dense_block_elems() * 2;
    s.size_nnz = static_cast<std::uint64_t>(c.sparse_count) * c.nnz_block_elems() * 2;
    s.size_e = static_cast<std::uint64_t>(c.sparse_count) * c.meta_words_per_block() * 2;
    return s;
}

} // namespace hierasparse
