// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hierasparse/attention.hpp"
#include "hierasparse/compressed_cache.hpp"
#include "hierasparse/cost_model.hpp"
#include "hierasparse/errors.hpp"
#include "hierasparse/pruner.hpp"
#include "hierasparse/tensor.hpp"

namespace hierasparse {

// One full benchmark run: synthetic Q/K/V per head, prune + compress at the
// prefill sparsities, prefill attention vs oracles, re-prune to the decode
// sparsities, one decode step vs oracles.
struct RunConfig {
    std::size_t seq_len = 512;
    std::size_t head_dim = 64;
    std::size_t heads = 1;       // KV heads; each serves gqa_group query heads
    std::size_t gqa_group = 1;
    std::size_t block_size = 64;
    double s_key_prefill = 0.5;
    double s_value_prefill = 0.5;
    double s_key_decode = 0.5;   // decode-phase ("further pruned") targets
    double s_value_decode = 0.5;
    std::size_t sink_tokens = 0;
    std::size_t local_window = 0;
    std::size_t b_r = 64;        // query-tile rows
    std::size_t splits = 1;      // decode split-KV count
    std::uint64_t seed = 1;
    std::string output_path;     // report destination; empty leaves it to the caller

    void validate() const {
        detail::check_config(seq_len > 0, "RunConfig: seq_len must be positive");
        detail::check_config(head_dim > 0 && head_dim % 4 == 0,
                             "RunConfig: head_dim must be a positive multiple of 4");
        detail::check_config(heads > 0, "RunConfig: heads must be positive");
        detail::check_config(gqa_group > 0, "RunConfig: gqa_group must be positive");
        detail::check_config(block_size > 0 && block_size % 4 == 0,
                             "RunConfig: block_size must be a positive multiple of 4");
        for (double s : {s_key_prefill, s_value_prefill, s_key_decode, s_value_decode}) {
            detail::check_config(s >= 0.0 && s <= 1.0,
                                 "RunConfig: sparsities must lie in [0, 1]");
        }
        detail::check_config(b_r > 0, "RunConfig: b_r must be positive");
        detail::check_config(splits > 0, "RunConfig: splits must be positive");
    }
};

struct AccuracyStats {
    double max_abs = 0.0;
    double mean_abs = 0.0;

    // internal accumulators
    double abs_sum = 0.0;
    std::uint64_t count = 0;

    void accumulate(const Tensor2D& got, const Tensor2D& want) {
        detail::check_config(got.same_shape(want), "AccuracyStats: shape mismatch");
        for (std::size_t i = 0; i < got.data.size(); ++i) {
            const double diff = std::fabs(static_cast<double>(got.data[i]) - want.data[i]);
            max_abs = std::max(max_abs, diff);
            abs_sum += diff;
        }
        count += got.data.size();
        mean_abs = abs_sum / static_cast<double>(count);
    }
};

struct StageTimings {
    double prune_ms = 0.0;
    double compress_ms = 0.0;
    double prefill_ms = 0.0;
    double decode_ms = 0.0;
    double total_ms = 0.0;
};

struct RunReport {
    static constexpr int kSchemaVersion = 1;

    RunConfig config;

    // Compression of the blocked prefix (prefill phase), both caches summed.
    SizeBreakdown measured_sizes;
    std::uint64_t dense_baseline_bytes = 0;
    double r_comp_measured = 1.0;
    double r_comp_model_exact = 1.0;
    double r_comp_model_approx = 1.0;

    // Engine accuracy against the oracle on decompressed caches (correctness)
    // and against the oracle on raw caches (pruning-quality proxy).
    AccuracyStats prefill_vs_decompressed;
    AccuracyStats prefill_vs_raw;
    AccuracyStats decode_vs_decompressed;
    AccuracyStats decode_vs_raw;

    // Analytical operation counts summed over heads and query groups.
    OpCounts prefill_counts;
    OpCounts decode_counts;
    double model_speedup_prefill = 1.0;  // at prefill sparsities
    double model_speedup_decode = 1.0;   // at decode sparsities

    StageTimings timings;  // informational only; excluded from comparisons
};

namespace detail {

inline Tensor2D concat_rows(const Tensor2D& top, const Tensor2D& bottom) {
    if (top.rows == 0) return bottom;
    if (bottom.rows == 0) return top;
    check_config(top.cols == bottom.cols, "concat_rows: column mismatch");
    Tensor2D out(top.rows + bottom.rows, top.cols);
    std::copy(top.data.begin(), top.data.end(), out.data.begin());
    std::copy(bottom.data.begin(), bottom.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(top.data.size()));
    return out;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Seed streams: one namespace per (head, tensor-role) pair.
inline std::uint64_t head_seed(std::uint64_t base, std::size_t head, std::size_t role) {
    return derive_seed(base, static_cast<std::uint64_t>(head) * 64 + role);
}

} // namespace detail

inline RunReport run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const std::size_t kL = cfg.seq_len;
    const std::size_t kD = cfg.head_dim;
    const std::size_t kB = cfg.block_size;
    const std::size_t prefix_len = (kL / kB) * kB;  // whole blocks
    const std::size_t tail_len = kL - prefix_len;
    const float scale = 1.0f / std::sqrt(static_cast<float>(kD));

    // The ragged tail is stored dense at the end of the sequence, so it
    // absorbs that many tokens of the protected local window.
    const std::size_t window_tokens_in_prefix =
        cfg.local_window > tail_len ? cfg.local_window - tail_len : 0;

    SparsityConfig prefill_cfg;
    prefill_cfg.s_key = cfg.s_key_prefill;
    prefill_cfg.s_value = cfg.s_value_prefill;
    prefill_cfg.block_size = kB;
    prefill_cfg.sink_tokens = cfg.sink_tokens;
    prefill_cfg.local_window = window_tokens_in_prefix;

    SparsityConfig decode_cfg = prefill_cfg;
    decode_cfg.s_key = cfg.s_key_decode;
    decode_cfg.s_value = cfg.s_value_decode;

    RunReport report;
    report.config = cfg;

    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const Tensor2D key = random_gaussian(kL, kD, detail::head_seed(cfg.seed, h, 0));
        const Tensor2D value = random_gaussian(kL, kD, detail::head_seed(cfg.seed, h, 1));
        const Tensor2D key_prefix = slice_rows(key, 0, prefix_len);
        const Tensor2D value_prefix = slice_rows(value, 0, prefix_len);
        const Tensor2D key_tail = slice_rows(key, prefix_len, kL);
        const Tensor2D value_tail = slice_rows(value, prefix_len, kL);

        // --- prefill phase: prune, compress, attend -------------------------
        auto t0 = std::chrono::steady_clock::now();
        const auto [key_mask, value_mask] = prune_cache(key_prefix, value_prefix, prefill_cfg);
        report.timings.prune_ms += detail::ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        const CompressedCache key_comp =
            compress(key_prefix, key_mask, prefill_cfg, GroupAxis::kChannel);
        const CompressedCache value_comp =
            compress(value_prefix, value_mask, prefill_cfg, GroupAxis::kSequence);
        report.timings.compress_ms += detail::ms_since(t0);

        const SizeBreakdown key_sizes = measure_size(key_comp);
        const SizeBreakdown value_sizes = measure_size(value_comp);
        report.measured_sizes.size_idx += key_sizes.size_idx + value_sizes.size_idx;
        report.measured_sizes.size_den += key_sizes.size_den + value_sizes.size_den;
        report.measured_sizes.size_nnz += key_sizes.size_nnz + value_sizes.size_nnz;
        report.measured_sizes.size_e += key_sizes.size_e + value_sizes.size_e;
        report.dense_baseline_bytes +=
            2 * static_cast<std::uint64_t>(prefix_len) * kD * 2;

        const CacheView key_view{&key_comp, key_tail};
        const CacheView value_view{&value_comp, value_tail};
        const Tensor2D key_masked = detail::concat_rows(decompress(key_comp), key_tail);
        const Tensor2D value_masked = detail::concat_rows(decompress(value_comp), value_tail);

        for (std::size_t g = 0; g < cfg.gqa_group; ++g) {
            const Tensor2D queries =
                random_gaussian(kL, kD, detail::head_seed(cfg.seed, h, 2 + g));
            AttentionWorkload w;
            w.queries = queries;
            w.key_cache = key_view;
            w.value_cache = value_view;
            w.causal = true;
            w.scale = scale;
            w.gqa_group = cfg.gqa_group;
            w.phase = Phase::kPrefill;

            t0 = std::chrono::steady_clock::now();
            const Tensor2D out = prefill_attention(w, TileConfig{cfg.b_r, kB});
            report.timings.prefill_ms += detail::ms_since(t0);

            report.prefill_vs_decompressed.accumulate(
                out, dense_attention_oracle(queries, key_masked, value_masked, true, scale));
            report.prefill_vs_raw.accumulate(
                out, dense_attention_oracle(queries, key, value, true, scale));

            const OpCounts counts = flop_and_byte_count(w);
            report.prefill_counts.flops += counts.flops;
            report.prefill_counts.bytes_moved += counts.bytes_moved;
        }

        // --- decode phase: re-prune to decode sparsity, one step ------------
        const Tensor2D key_repruned_src = decompress(key_comp);
        const Tensor2D value_repruned_src = decompress(value_comp);
        t0 = std::chrono::steady_clock::now();
        const auto [key_mask2, value_mask2] =
            prune_cache(key_repruned_src, value_repruned_src, decode_cfg);
        report.timings.prune_ms += detail::ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        const CompressedCache key_comp2 =
            compress(key_repruned_src, key_mask2, decode_cfg, GroupAxis::kChannel);
        const CompressedCache value_comp2 =
            compress(value_repruned_src, value_mask2, decode_cfg, GroupAxis::kSequence);
        report.timings.compress_ms += detail::ms_since(t0);

        const CacheView key_view2{&key_comp2, key_tail};
        const CacheView value_view2{&value_comp2, value_tail};
        const Tensor2D key_masked2 = detail::concat_rows(decompress(key_comp2), key_tail);
        const Tensor2D value_masked2 = detail::concat_rows(decompress(value_comp2), value_tail);

        Tensor2D decode_queries(cfg.gqa_group, kD);
        for (std::size_t g = 0; g < cfg.gqa_group; ++g) {
            const Tensor2D q = random_gaussian(1, kD, detail::head_seed(cfg.seed, h, 32 + g));
            std::copy(q.data.begin(), q.data.end(), decode_queries.row(g));
        }

        AttentionWorkload wd;
        wd.queries = decode_queries;
        wd.key_cache = key_view2;
        wd.value_cache = value_view2;
        wd.causal = false;
        wd.scale = scale;
        wd.gqa_group = cfg.gqa_group;
        wd.phase = Phase::kDecode;

        t0 = std::chrono::steady_clock::now();
        const Tensor2D decode_out = decode_attention(wd, cfg.splits);
        report.timings.decode_ms += detail::ms_since(t0);

        report.decode_vs_decompressed.accumulate(
            decode_out,
            dense_attention_oracle(decode_queries, key_masked2, value_masked2, false, scale));
        report.decode_vs_raw.accumulate(
            decode_out, dense_attention_oracle(decode_queries, key, value, false, scale));

        const OpCounts dcounts = flop_and_byte_count(wd);
        report.decode_counts.flops += dcounts.flops;
        report.decode_counts.bytes_moved += dcounts.bytes_moved;
    }

    // Closed-form model values at the configured sparsities.
    CostParams model;
    model.seq_len = prefix_len > 0 ? prefix_len : kL;
    model.hidden_dim = kD;
    model.block_size = kB;
    model.s_key = cfg.s_key_prefill;
    model.s_value = cfg.s_value_prefill;
    report.r_comp_model_exact = compression_ratio(model, true);
    report.r_comp_model_approx = compression_ratio(model, false);
    report.model_speedup_prefill = prefill_speedup(model);
    model.s_key = cfg.s_key_decode;
    model.s_value = cfg.s_value_decode;
    report.model_speedup_decode = decode_speedup(model);

    report.r_comp_measured =
        report.measured_sizes.total() > 0
            ? static_cast<double>(report.dense_baseline_bytes) /
                  static_cast<double>(report.measured_sizes.total())
            : 1.0;

    report.timings.total_ms = detail::ms_since(t_start);
    return report;
}

} // namespace hierasparse
