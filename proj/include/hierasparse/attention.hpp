// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "hierasparse/compressed_cache.hpp"
#include "hierasparse/container.hpp"
#include "hierasparse/errors.hpp"
#include "hierasparse/nm_metadata.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

enum class Phase { kPrefill, kDecode };

// One cache as the engine sees it: a compressed blocked prefix plus an
// optional dense tail of trailing tokens (tokens appended after compression,
// or a ragged remainder shorter than one block).  The tail is always dense.
struct CacheView {
    const CompressedCache* compressed = nullptr;
    Tensor2D dense_tail;

    std::size_t prefix_tokens() const {
        return compressed ? compressed->sequence_length() : 0;
    }
    std::size_t tokens() const { return prefix_tokens() + dense_tail.rows; }
    std::size_t block_count() const { return compressed ? compressed->logical_blocks : 0; }
};

struct AttentionWorkload {
    Tensor2D queries;      // n_q × d
    CacheView key_cache;   // channel-grouped blocks (block_size × d stored)
    CacheView value_cache; // sequence-grouped blocks (d × block_size stored)
    bool causal = false;
    float scale = 1.0f;    // typically 1/sqrt(d)
    std::size_t gqa_group = 1;
    Phase phase = Phase::kPrefill;
};

// Tile geometry.  b_c is pinned to the cache block size so the dense/sparse
// decision is a single index-map lookup per key/value tile.
struct TileConfig {
    std::size_t b_r = 64;
    std::size_t b_c = 64;
};

// Per-query-row online softmax statistics with the transposed accumulator.
struct SoftmaxState {
    std::vector<float> running_max;  // M_i, init -inf
    std::vector<float> running_sum;  // L_i (sum of exponentials), init 0
    Tensor2D acc_t;                  // O^T_i: d × rows, unnormalized

    SoftmaxState(std::size_t rows, std::size_t d)
        : running_max(rows, -std::numeric_limits<float>::infinity()),
          running_sum(rows, 0.0f),
          acc_t(d, rows) {}
};

// Result of attending one contiguous key/value range: the unnormalized
// output scaled to the range's own running max, plus that max and the
// sum of exponentials — everything the split combiner needs.
struct SplitPartial {
    Tensor2D output_t;        // d × rows, unnormalized
    std::vector<float> m_s;   // per-row max over the range (-inf if nothing visible)
    std::vector<float> l_s;   // per-row sum of exponentials
};

// How attend_range resolves each block's dense/sparse kind.  kAuto takes the
// specialized shortcut when a cache is entirely one kind; kForceMixed always
// consults the index map.  The two must be result-identical — the shortcut
// only skips per-block map lookups.
enum class DispatchPolicy { kAuto, kForceMixed };

// ---------------------------------------------------------------------------
// Dense oracle
// ---------------------------------------------------------------------------

// Exact two-pass softmax attention on dense tensors; the ground truth every
// engine path is checked against.  Causal alignment places the queries at the
// last n_q positions of the key sequence.
inline Tensor2D dense_attention_oracle(const Tensor2D& queries, const Tensor2D& keys,
                                       const Tensor2D& values, bool causal, float scale) {
    detail::check_config(queries.cols == keys.cols, "oracle: query/key head dim mismatch");
    detail::check_config(keys.rows == values.rows, "oracle: key/value length mismatch");
    detail::check_config(keys.rows > 0, "oracle: empty key sequence");
    detail::check_config(!causal || keys.rows >= queries.rows,
                         "oracle: causal queries exceed key sequence");

    Tensor2D scores = matmul(queries, transpose(keys));
    const std::size_t offset = keys.rows - queries.rows;
    for (std::size_t i = 0; i < scores.rows; ++i) {
        for (std::size_t j = 0; j < scores.cols; ++j) {
            if (causal && j > offset + i) {
                scores.at(i, j) = -std::numeric_limits<float>::infinity();
            } else {
                scores.at(i, j) *= scale;
            }
        }
    }
    for (std::size_t i = 0; i < scores.rows; ++i) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < scores.cols; ++j) m = std::max(m, scores.at(i, j));
        float l = 0.0f;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            const float p = std::exp(scores.at(i, j) - m);
            scores.at(i, j) = p;
            l += p;
        }
        for (std::size_t j = 0; j < scores.cols; ++j) scores.at(i, j) /= l;
    }
    return matmul(scores, values);
}

// ---------------------------------------------------------------------------
// Sparse GEMM emulation
// ---------------------------------------------------------------------------

// Value-semantics contract of a sparse-operand GEMM: the compressed operand
// (nonzeros + position metadata) behaves exactly like its dense expansion.
// The emulation IS expand-then-multiply; any direct-from-nnz implementation
// must match it bit for bit.
inline Tensor2D sparse_gemm_emulated(const Tensor2D& nnz, const GroupMetadata& meta,
                                     const NmPattern& pattern, std::size_t full_cols,
                                     const Tensor2D& dense_operand) {
    detail::check_config(full_cols == dense_operand.rows,
                         "sparse_gemm_emulated: reduction dimension mismatch");
    return matmul(expand_sparse(nnz, meta, pattern, full_cols), dense_operand);
}

// ---------------------------------------------------------------------------
// Tiled attend core
// ---------------------------------------------------------------------------

namespace detail {

inline void check_view_pair(const CacheView& keys, const CacheView& values) {
    check_config(keys.tokens() == values.tokens(),
                 "attention: key/value token counts differ");
    check_config(keys.block_count() == values.block_count(),
                 "attention: key/value block counts differ");
    if (keys.compressed) {
        check_config(keys.compressed->axis == GroupAxis::kChannel,
                     "attention: key cache must be channel-grouped");
    }
    if (values.compressed) {
        check_config(values.compressed->axis == GroupAxis::kSequence,
                     "attention: value cache must be sequence-grouped");
    }
    if (keys.compressed && values.compressed) {
        check_config(keys.compressed->cfg.block_size == values.compressed->cfg.block_size,
                     "attention: key/value block sizes differ");
    }
}

// Resolves whether block b of a cache is dense, honoring the dispatch policy:
// fully-dense / fully-sparse caches short-circuit without touching the map.
inline bool block_dense(const CompressedCache& c, std::size_t b, DispatchPolicy policy) {
    if (policy == DispatchPolicy::kAuto) {
        if (c.sparse_count == 0) return true;
        if (c.dense_count == 0) return false;
    }
    check_data(c.index_map[b] != 0, "attention: index map holds a zero entry");
    return c.block_is_dense(b);
}

// One online-softmax update with the scores S^T (keys × rows) of a key chunk
// starting at absolute position key_start.  qpos is empty for non-causal.
inline void online_softmax_update(SoftmaxState& state, Tensor2D& scores_t,
                                  std::size_t key_start, float scale,
                                  const std::vector<std::ptrdiff_t>& qpos,
                                  const CompressedCache* value_cache, std::size_t value_slot,
                                  bool value_dense, const Tensor2D* value_tail_t) {
    const std::size_t kkeys = scores_t.rows;
    const std::size_t rows = scores_t.cols;
    const float kNegInf = -std::numeric_limits<float>::infinity();

    // Scale scores and apply the causal mask at score level.
    for (std::size_t kk = 0; kk < kkeys; ++kk) {
        for (std::size_t q = 0; q < rows; ++q) {
            if (!qpos.empty() &&
                static_cast<std::ptrdiff_t>(key_start + kk) > qpos[q]) {
                scores_t.at(kk, q) = kNegInf;
            } else {
                scores_t.at(kk, q) *= scale;
            }
        }
    }

    // Per-row rescale factors; P^T shares storage with S^T.
    std::vector<float> alpha(rows, 1.0f);
    for (std::size_t q = 0; q < rows; ++q) {
        float block_max = kNegInf;
        for (std::size_t kk = 0; kk < kkeys; ++kk) {
            block_max = std::max(block_max, scores_t.at(kk, q));
        }
        const float m_new = std::max(state.running_max[q], block_max);
        if (m_new == kNegInf) {
            // Nothing visible yet for this row: probabilities are zero and the
            // running statistics stay in their initial state.
            for (std::size_t kk = 0; kk < kkeys; ++kk) scores_t.at(kk, q) = 0.0f;
            alpha[q] = 1.0f;
            continue;
        }
        float row_sum = 0.0f;
        for (std::size_t kk = 0; kk < kkeys; ++kk) {
            const float p = std::exp(scores_t.at(kk, q) - m_new);
            scores_t.at(kk, q) = p;
            row_sum += p;
        }
        alpha[q] = std::exp(state.running_max[q] - m_new);
        state.running_sum[q] = state.running_sum[q] * alpha[q] + row_sum;
        state.running_max[q] = m_new;
    }
    for (std::size_t dd = 0; dd < state.acc_t.rows; ++dd) {
        for (std::size_t q = 0; q < rows; ++q) {
            state.acc_t.at(dd, q) *= alpha[q];
        }
    }

    // O^T += V^T × P^T; the value operand is already stored transposed, so no
    // data relayout happens between the two GEMMs — P^T feeds straight in.
    Tensor2D contrib;
    if (value_tail_t) {
        contrib = matmul(*value_tail_t, scores_t);
    } else if (value_dense) {
        contrib = matmul(value_cache->dense_block(value_slot), scores_t);
    } else {
        contrib = sparse_gemm_emulated(value_cache->nnz_block(value_slot),
                                       value_cache->block_metadata(value_slot),
                                       value_cache->cfg.pattern,
                                       value_cache->stored_cols(), scores_t);
    }
    for (std::size_t i = 0; i < contrib.data.size(); ++i) {
        state.acc_t.data[i] += contrib.data[i];
    }
}

} // namespace detail

// Attends one contiguous block range [block_begin, block_end) of the caches
// (plus the dense tails when include_tail), maintaining online softmax over
// the range.  qpos gives each query row's absolute position for causal
// masking (empty = non-causal); blocks entirely above the causal diagonal are
// skipped.  Returns the unnormalized partial — both the prefill loop and the
// split-KV decode combiner finish from this.
inline SplitPartial attend_range(const Tensor2D& q_tile, const CacheView& keys,
                                 const CacheView& values, std::size_t block_begin,
                                 std::size_t block_end, bool include_tail, float scale,
                                 const std::vector<std::ptrdiff_t>& qpos,
                                 DispatchPolicy policy = DispatchPolicy::kAuto) {
    detail::check_view_pair(keys, values);
    detail::check_config(block_end <= keys.block_count() && block_begin <= block_end,
                         "attend_range: block range out of bounds");
    detail::check_config(qpos.empty() || qpos.size() == q_tile.rows,
                         "attend_range: qpos must cover every query row");

    const std::size_t rows = q_tile.rows;
    const std::size_t d = q_tile.cols;
    SoftmaxState state(rows, d);
    const Tensor2D q_t = transpose(q_tile);

    std::ptrdiff_t qpos_max = -1;
    for (std::ptrdiff_t p : qpos) qpos_max = std::max(qpos_max, p);

    for (std::size_t b = block_begin; b < block_end; ++b) {
        const CompressedCache& kc = *keys.compressed;
        const CompressedCache& vc = *values.compressed;
        const std::size_t key_start = b * kc.cfg.block_size;

        // Block-level causal skip: no query row in this tile can see into a
        // block that starts past the latest query position.
        if (!qpos.empty() && static_cast<std::ptrdiff_t>(key_start) > qpos_max) continue;

        const bool k_dense = detail::block_dense(kc, b, policy);
        const std::size_t k_slot = kc.block_slot(b);
        Tensor2D scores_t =
            k_dense ? matmul(kc.dense_block(k_slot), q_t)
                    : sparse_gemm_emulated(kc.nnz_block(k_slot), kc.block_metadata(k_slot),
                                           kc.cfg.pattern, kc.stored_cols(), q_t);

        const bool v_dense = detail::block_dense(vc, b, policy);
        detail::online_softmax_update(state, scores_t, key_start, scale, qpos, &vc,
                                      vc.block_slot(b), v_dense, nullptr);
    }

    if (include_tail && keys.dense_tail.rows > 0) {
        const std::size_t key_start = keys.prefix_tokens();
        if (qpos.empty() || static_cast<std::ptrdiff_t>(key_start) <= qpos_max) {
            Tensor2D scores_t = matmul(keys.dense_tail, q_t);
            const Tensor2D value_tail_t = transpose(values.dense_tail);
            detail::online_softmax_update(state, scores_t, key_start, scale, qpos, nullptr, 0,
                                          true, &value_tail_t);
        }
    }

    SplitPartial out;
    out.output_t = std::move(state.acc_t);
    out.m_s = std::move(state.running_max);
    out.l_s = std::move(state.running_sum);
    return out;
}

namespace detail {

// Normalizes a finished partial into row-major output rows [row0, row0+rows).
inline void finalize_rows(const SplitPartial& p, Tensor2D& out, std::size_t row0) {
    const std::size_t rows = p.l_s.size();
    for (std::size_t q = 0; q < rows; ++q) {
        check_data(p.l_s[q] > 0.0f, "attention: query row attends no visible keys");
        for (std::size_t dd = 0; dd < p.output_t.rows; ++dd) {
            out.at(row0 + q, dd) = p.output_t.at(dd, q) / p.l_s[q];
        }
    }
}

} // namespace detail

// Tiled prefill: query tiles of b_r rows stream over all key/value blocks
// with per-block dense/sparse dispatch and online softmax.
inline Tensor2D prefill_attention(const AttentionWorkload& w, const TileConfig& tiles,
                                  DispatchPolicy policy = DispatchPolicy::kAuto) {
    detail::check_view_pair(w.key_cache, w.value_cache);
    detail::check_config(tiles.b_r > 0, "prefill_attention: b_r must be positive");
    if (w.key_cache.compressed) {
        detail::check_config(tiles.b_c == w.key_cache.compressed->cfg.block_size,
                             "prefill_attention: b_c must equal the cache block size");
    }
    const std::size_t n_q = w.queries.rows;
    const std::size_t n_kv = w.key_cache.tokens();
    detail::check_config(n_kv > 0, "prefill_attention: empty key/value cache");
    detail::check_config(!w.causal || n_kv >= n_q,
                         "prefill_attention: causal queries exceed key sequence");

    Tensor2D out(n_q, w.queries.cols);
    for (std::size_t t0 = 0; t0 < n_q; t0 += tiles.b_r) {
        const std::size_t t1 = std::min(t0 + tiles.b_r, n_q);
        const Tensor2D q_tile = slice_rows(w.queries, t0, t1);
        std::vector<std::ptrdiff_t> qpos;
        if (w.causal) {
            qpos.resize(t1 - t0);
            for (std::size_t i = 0; i < qpos.size(); ++i) {
                qpos[i] = static_cast<std::ptrdiff_t>(n_kv - n_q + t0 + i);
            }
        }
        const SplitPartial partial =
            attend_range(q_tile, w.key_cache, w.value_cache, 0, w.key_cache.block_count(),
                         /*include_tail=*/true, w.scale, qpos, policy);
        detail::finalize_rows(partial, out, t0);
    }
    return out;
}

// Split-KV decode: the block range is partitioned into `splits` contiguous
// chunks (clamped to the block count), each attended independently, and the
// partials are combined through their (m_s, l_s) statistics.  All query rows
// share the KV head — with gqa_group > 1 they are that head's query group.
inline Tensor2D decode_attention(const AttentionWorkload& w, std::size_t splits,
                                 DispatchPolicy policy = DispatchPolicy::kAuto) {
    detail::check_view_pair(w.key_cache, w.value_cache);
    const std::size_t n_q = w.queries.rows;
    detail::check_config(n_q >= 1, "decode_attention: no query rows");
    detail::check_config(w.gqa_group == 0 || n_q == w.gqa_group,
                         "decode_attention: one query row per head in the GQA group");
    detail::check_config(w.key_cache.tokens() > 0, "decode_attention: empty cache");
    detail::check_config(!w.causal,
                         "decode_attention: the new token sees the whole cache; "
                         "causal masking does not apply");

    const std::size_t nblocks = w.key_cache.block_count();
    std::size_t nsplits = std::max<std::size_t>(splits, 1);
    nsplits = std::min(nsplits, std::max<std::size_t>(nblocks, 1));

    const std::vector<std::ptrdiff_t> no_qpos;
    std::vector<SplitPartial> partials;
    partials.reserve(nsplits);
    for (std::size_t s = 0; s < nsplits; ++s) {
        const std::size_t begin = nblocks * s / nsplits;
        const std::size_t end = nblocks * (s + 1) / nsplits;
        partials.push_back(attend_range(w.queries, w.key_cache, w.value_cache, begin, end,
                                        /*include_tail=*/s + 1 == nsplits, w.scale, no_qpos,
                                        policy));
    }

    // Combine: m = max_s m_s; l = Σ l_s·exp(m_s − m); O = Σ O_s·exp(m_s − m) / l.
    const std::size_t d = w.queries.cols;
    Tensor2D out(n_q, d);
    for (std::size_t q = 0; q < n_q; ++q) {
        float m = -std::numeric_limits<float>::infinity();
        for (const SplitPartial& p : partials) m = std::max(m, p.m_s[q]);
        float l = 0.0f;
        std::vector<float> weights(partials.size());
        for (std::size_t s = 0; s < partials.size(); ++s) {
            weights[s] = std::exp(partials[s].m_s[q] - m);
            l += partials[s].l_s[q] * weights[s];
        }
        detail::check_data(l > 0.0f, "decode_attention: query row attends no keys");
        for (std::size_t dd = 0; dd < d; ++dd) {
            float acc = 0.0f;
            for (std::size_t s = 0; s < partials.size(); ++s) {
                acc += partials[s].output_t.at(dd, q) * weights[s];
            }
            out.at(q, dd) = acc / l;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analytical operation counts
// ---------------------------------------------------------------------------

struct OpCounts {
    std::uint64_t flops = 0;        // GEMM multiply-adds at 2 flops each
    std::uint64_t bytes_moved = 0;  // cache bytes at 16-bit accounting + headers
};

// Closed-form operation counts for a workload: every (query row, key) pair
// costs 2·D flops per GEMM against a dense block and half that against a
// sparse block; causality is counted at row granularity so totals are
// independent of tiling.  Bytes model one full traversal of the compressed
// caches (index map + pools at 16-bit accounting, plus the fixed per-cache
// container header) and of the dense tails.
inline OpCounts flop_and_byte_count(const AttentionWorkload& w) {
    OpCounts counts;
    const std::uint64_t d = w.queries.cols;
    const std::size_t n_q = w.queries.rows;
    const std::size_t n_kv = w.key_cache.tokens();
    const std::size_t nblocks = w.key_cache.block_count();
    const std::size_t block =
        w.key_cache.compressed ? w.key_cache.compressed->cfg.block_size : 0;

    for (std::size_t i = 0; i < n_q; ++i) {
        // Causal alignment matches the engine: query i sits at absolute
        // position n_kv - n_q + i and sees keys up to there.
        const std::size_t visible_keys =
            w.causal ? (n_kv - n_q + i + 1) : n_kv;
        for (std::size_t b = 0; b < nblocks; ++b) {
            const std::size_t start = b * block;
            if (start >= visible_keys) break;
            const std::uint64_t width = std::min(block, visible_keys - start);
            const bool k_dense = detail::block_dense(*w.key_cache.compressed, b,
                                                     DispatchPolicy::kAuto);
            const bool v_dense = detail::block_dense(*w.value_cache.compressed, b,
                                                     DispatchPolicy::kAuto);
            counts.flops += width * d * (k_dense ? 2 : 1);  // S^T = K × Q^T
            counts.flops += width * d * (v_dense ? 2 : 1);  // O^T = V^T × P^T
        }
        const std::size_t prefix = w.key_cache.prefix_tokens();
        if (visible_keys > prefix) {
            const std::uint64_t tail_width = visible_keys - prefix;
            counts.flops += 2 * tail_width * d * 2;  // dense tail, both GEMMs
        }
    }

    for (const CacheView* view : {&w.key_cache, &w.value_cache}) {
        if (view->compressed) {
            counts.bytes_moved += kContainerHeaderBytes;
            counts.bytes_moved += measure_size(*view->compressed).total();
        }
        counts.bytes_moved += static_cast<std::uint64_t>(view->dense_tail.rows) *
                              view->dense_tail.cols * 2;
    }
    return counts;
}

} // namespace hierasparse
