// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "hierasparse/errors.hpp"

namespace hierasparse {

// Inputs of the closed-form efficiency analysis.  The generalization knobs
// (metadata_fraction, nnz_fraction) default to the 16-bit 2:4 regime —
// 1/16 of dense size for packed metadata, 1/2 for kept values — which every
// published constant assumes.  dense_throughput exists to make explicit that
// hardware throughput cancels out of all speedup ratios.
struct CostParams {
    std::size_t seq_len = 4096;    // L, tokens
    std::size_t hidden_dim = 128;  // D
    std::size_t block_size = 64;   // B
    double s_key = 0.0;            // S_K in [0, 1]
    double s_value = 0.0;          // S_V in [0, 1]
    double dense_throughput = 1.0; // C, flops/s in arbitrary units
    double metadata_fraction = 1.0 / 16.0;
    double nnz_fraction = 1.0 / 2.0;

    void validate() const {
        detail::check_config(seq_len > 0 && hidden_dim > 0 && block_size > 0,
                             "CostParams: L, D, B must be positive");
        detail::check_config(s_key >= 0.0 && s_key <= 1.0 && s_value >= 0.0 && s_value <= 1.0,
                             "CostParams: sparsities outside [0, 1]");
        detail::check_config(dense_throughput > 0.0,
                             "CostParams: dense_throughput must be positive");
    }
};

// Cache sizes in bytes (16-bit elements), both caches combined, as real
// values since fractional sparsities give fractional block counts:
//   baseline = 2·L·D elements
//   idx      = 2·L/B entries        den = L·D·(2 − S_K − S_V)
//   nnz      = L·D·(S_K + S_V)/2    e   = L·D·(S_K + S_V)/16
struct AnalyticSizes {
    double size_idx = 0.0;
    double size_den = 0.0;
    double size_nnz = 0.0;
    double size_e = 0.0;

    double total() const { return size_idx + size_den + size_nnz + size_e; }
};

inline AnalyticSizes analytic_sizes(const CostParams& p) {
    p.validate();
    const double ld = static_cast<double>(p.seq_len) * static_cast<double>(p.hidden_dim);
    const double s_sum = p.s_key + p.s_value;
    AnalyticSizes s;
    s.size_idx = 2.0 * static_cast<double>(p.seq_len) / static_cast<double>(p.block_size) * 2.0;
    s.size_den = ld * (2.0 - s_sum) * 2.0;
    s.size_nnz = ld * s_sum * p.nnz_fraction * 2.0;
    s.size_e = ld * s_sum * p.metadata_fraction * 2.0;
    return s;
}

// r_comp: dense cache bytes over compressed bytes.  The approximate form drops
// the index map's 1/(B·D) term:
//   exact  = 1 / (1 − 0.21875·(S_K + S_V) + 1/(B·D))
//   approx = 1 / (1 − 0.21875·(S_K + S_V))
// where 0.21875 = (1 − 1/2 − 1/16)/2, the per-cache savings of a sparse block
// averaged over the two caches.
inline double compression_ratio(const CostParams& p, bool exact) {
    p.validate();
    const double savings_per_cache = (1.0 - p.nnz_fraction - p.metadata_fraction) / 2.0;
    double denom = 1.0 - savings_per_cache * (p.s_key + p.s_value);
    if (exact) {
        denom += 1.0 / (static_cast<double>(p.block_size) * static_cast<double>(p.hidden_dim));
    }
    return 1.0 / denom;
}

// Prefill is compute-bound: each GEMM runs at 2× on its sparse blocks, so of
// the dense 4·L²·D flop budget a fraction (S_K + S_V)/4 halves in cost.
// dense_throughput divides both sides of the ratio and cancels.
inline double prefill_speedup(const CostParams& p) {
    p.validate();
    return 4.0 / (4.0 - (p.s_key + p.s_value));
}

// Decode is memory-bound on cache traffic, so the ideal speedup is exactly
// the (approximate) compression ratio.
inline double decode_speedup(const CostParams& p) {
    return compression_ratio(p, /*exact=*/false);
}

// One row of the GEMM-orientation design space at full sparsity
// (S_K = S_V = 1): which operands can sit in the sparse slot, and the ideal
// per-phase speedups that orientation admits.
struct DesignSpaceRow {
    std::string config;
    std::array<std::string, 2> sparse_operands;
    double ideal_prefill = 1.0;
    double ideal_decode = 1.0;
};

// The four candidate orientations.  Only Trans-Both puts both offline-
// compressible caches (K and V) in sparse slots, which is what buys the
// decode-side speedup; the others leave at least one cache dense or depend
// on runtime activations (Q, P) that cannot be pre-compressed.
inline std::array<DesignSpaceRow, 4> design_space_table() {
    return {{
        {"Naive", {"Q", "P"}, 2.0, 1.0},
        {"Trans-K", {"K", "P"}, 2.0, 1.5},
        {"Trans-V", {"Q", "V"}, 2.0, 1.5},
        {"Trans-Both", {"K", "V"}, 2.0, 2.0},
    }};
}

// Full closed-form report for one parameter point.
struct CostReport {
    CostParams params;
    AnalyticSizes sizes;
    double r_comp_exact = 1.0;
    double r_comp_approx = 1.0;
    double speedup_prefill = 1.0;
    double speedup_decode = 1.0;
    std::array<DesignSpaceRow, 4> design_space;
};

inline CostReport cost_report(const CostParams& p) {
    CostReport r;
    r.params = p;
    r.sizes = analytic_sizes(p);
    r.r_comp_exact = compression_ratio(p, true);
    r.r_comp_approx = compression_ratio(p, false);
    r.speedup_prefill = prefill_speedup(p);
    r.speedup_decode = decode_speedup(p);
    r.design_space = design_space_table();
    return r;
}

} // namespace hierasparse
