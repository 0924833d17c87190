// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "hierasparse/errors.hpp"
#include "hierasparse/masks.hpp"
#include "hierasparse/nm_metadata.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

// Grouping orientation per cache.  Fixed by the transposed-GEMM layout: the
// key cache reduces over the head dimension, the transposed value cache over
// the in-block sequence, and N:M pruning must run along the reduction axis.
struct PruneAxes {
    GroupAxis key_axis = GroupAxis::kChannel;
    GroupAxis value_axis = GroupAxis::kSequence;
};

// Two-level mask for one cache: the element-level N:M keep mask and the
// block-level dense/sparse selection, plus the protected-region geometry the
// selection honored.  The element mask is all-true on dense blocks.
struct HierarchicalMask {
    ElementMask element;
    BlockMask block;
    std::size_t protected_prefix_blocks = 0;
    std::size_t protected_suffix_blocks = 0;
};

// Per-group top-n_keep magnitude mask over one block.  Within every aligned
// group of m_group elements along the grouping axis the n_keep largest
// magnitudes are kept; on ties the lower index wins wholesale, so the kept
// set is the lexicographically smallest among maximal-magnitude sets.
inline ElementMask element_mask(const Tensor2D& block, GroupAxis axis,
                                const NmPattern& pattern) {
    pattern.validate();
    const std::size_t m = pattern.m_group;
    const std::size_t axis_len = (axis == GroupAxis::kChannel) ? block.cols : block.rows;
    detail::check_config(axis_len % m == 0,
                         "element_mask: grouping axis not divisible by m_group");

    ElementMask mask(block.rows, block.cols, 0);
    const std::size_t lanes = (axis == GroupAxis::kChannel) ? block.rows : block.cols;
    const std::size_t groups = axis_len / m;

    std::vector<std::size_t> order(m);
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        for (std::size_t g = 0; g < groups; ++g) {
            // Sort group positions by magnitude, descending, lower index first
            // on ties; the first n_keep positions are kept.
            std::iota(order.begin(), order.end(), 0);
            const auto value_at = [&](std::size_t i) {
                const std::size_t off = g * m + i;
                return (axis == GroupAxis::kChannel) ? block.at(lane, off)
                                                     : block.at(off, lane);
            };
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::fabs(value_at(a)) > std::fabs(value_at(b));
            });
            for (std::size_t i = 0; i < pattern.n_keep; ++i) {
                const std::size_t off = g * m + order[i];
                if (axis == GroupAxis::kChannel) {
                    mask.set(lane, off, true);
                } else {
                    mask.set(off, lane, true);
                }
            }
        }
    }
    return mask;
}

// L1 norm of the masked-out elements: the magnitude this block would lose if
// pruned.  Accumulated in double so block ranking is stable.
inline double block_loss(const Tensor2D& block, const ElementMask& mask) {
    detail::check_config(block.rows == mask.rows && block.cols == mask.cols,
                         "block_loss: shape mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < block.data.size(); ++i) {
        if (!mask.bits[i]) loss += std::fabs(static_cast<double>(block.data[i]));
    }
    return loss;
}

// Block-level selection: among non-protected blocks, the floor(S × count)
// lowest-loss blocks are flagged sparse, ties broken toward the lower block
// index.  Protected prefix/suffix blocks are always dense.
inline BlockMask select_blocks(const std::vector<double>& losses, double target_sparsity,
                               std::size_t protected_prefix, std::size_t protected_suffix) {
    detail::check_config(target_sparsity >= 0.0 && target_sparsity <= 1.0,
                         "select_blocks: sparsity outside [0, 1]");
    const std::size_t total = losses.size();
    detail::check_config(protected_prefix + protected_suffix <= total,
                         "select_blocks: protected regions exceed block count");

    BlockMask mask;
    mask.flags.assign(total, 1);
    mask.losses = losses;

    const std::size_t prunable = total - protected_prefix - protected_suffix;
    const auto quota = static_cast<std::size_t>(
        std::floor(target_sparsity * static_cast<double>(prunable)));
    if (quota == 0) return mask;

    std::vector<std::size_t> candidates(prunable);
    std::iota(candidates.begin(), candidates.end(), protected_prefix);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    for (std::size_t i = 0; i < quota; ++i) mask.flags[candidates[i]] = 0;
    return mask;
}

namespace detail {

inline HierarchicalMask hierarchical_mask_for(const Tensor2D& cache, GroupAxis axis,
                                              double sparsity, const SparsityConfig& cfg) {
    const std::size_t kBlock = cfg.block_size;
    check_config(cache.rows % kBlock == 0,
                 "prune_cache: sequence length not divisible by block_size");
    const std::size_t nblocks = cache.rows / kBlock;

    // Protected regions round up to whole blocks and clamp to the sequence;
    // if sink and window overlap on a short cache the whole thing stays dense.
    const std::size_t prefix = std::min(cfg.protected_prefix_blocks(), nblocks);
    const std::size_t suffix = std::min(cfg.protected_suffix_blocks(), nblocks - prefix);

    std::vector<ElementMask> candidates(nblocks);
    std::vector<double> losses(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const Tensor2D block = slice_rows(cache, b * kBlock, (b + 1) * kBlock);
        candidates[b] = element_mask(block, axis, cfg.pattern);
        losses[b] = block_loss(block, candidates[b]);
    }

    HierarchicalMask hm;
    hm.block = select_blocks(losses, sparsity, prefix, suffix);
    hm.protected_prefix_blocks = prefix;
    hm.protected_suffix_blocks = suffix;

    // Assemble the cache-wide element mask: sparse blocks take their N:M
    // candidate mask, dense blocks keep everything.
    hm.element = ElementMask(cache.rows, cache.cols, 1);
    for (std::size_t b = 0; b < nblocks; ++b) {
        if (hm.block.is_dense(b)) continue;
        for (std::size_t r = 0; r < kBlock; ++r) {
            for (std::size_t c = 0; c < cache.cols; ++c) {
                hm.element.set(b * kBlock + r, c, candidates[b].at(r, c));
            }
        }
    }
    return hm;
}

} // namespace detail

// Full hierarchical pruning of a key/value cache pair: element masks along
// each cache's grouping axis, per-block losses, and independent block
// selection at S_K and S_V with shared protected regions.
inline std::pair<HierarchicalMask, HierarchicalMask> prune_cache(const Tensor2D& key,
                                                                 const Tensor2D& value,
                                                                 const SparsityConfig& cfg) {
    cfg.validate();
    detail::check_config(key.rows == value.rows,
                         "prune_cache: key/value sequence lengths differ");
    const PruneAxes axes;
    detail::check_config(key.cols % cfg.pattern.m_group == 0,
                         "prune_cache: head dimension not divisible by m_group");
    return {detail::hierarchical_mask_for(key, axes.key_axis, cfg.s_key, cfg),
            detail::hierarchical_mask_for(value, axes.value_axis, cfg.s_value, cfg)};
}

} // namespace hierasparse
