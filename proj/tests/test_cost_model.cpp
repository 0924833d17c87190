// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "hierasparse/compressed_cache.hpp"
#include "hierasparse/cost_model.hpp"
#include "hierasparse/pruner.hpp"

using namespace hierasparse;

namespace {

CostParams params(double s_key, double s_value, std::size_t seq_len = 4096,
                  std::size_t hidden_dim = 128, std::size_t block_size = 64) {
    CostParams p;
    p.seq_len = seq_len;
    p.hidden_dim = hidden_dim;
    p.block_size = block_size;
    p.s_key = s_key;
    p.s_value = s_value;
    return p;
}

TEST(CompressionRatio, PublishedOperatingPoints) {
    // (0.75, 0.75): r_comp ≈ 1.49; (1, 1): ≈ 1.78.
    EXPECT_NEAR(compression_ratio(params(0.75, 0.75), false), 1.49, 0.005);
    EXPECT_NEAR(compression_ratio(params(1.0, 1.0), false), 1.78, 0.005);
    // Exact closed forms of the approximate ratio.
    EXPECT_DOUBLE_EQ(compression_ratio(params(1.0, 1.0), false), 1.0 / 0.5625);
    EXPECT_DOUBLE_EQ(compression_ratio(params(0.5, 0.5), false), 32.0 / 25.0);  // 1.28
}

TEST(CompressionRatio, ExactFormAddsTheIndexTerm) {
    const CostParams p = params(0.25, 0.25);
    const double denom_approx = 1.0 - 0.21875 * 0.5;
    const double denom_exact = denom_approx + 1.0 / (64.0 * 128.0);
    EXPECT_DOUBLE_EQ(compression_ratio(p, false), 1.0 / denom_approx);
    EXPECT_DOUBLE_EQ(compression_ratio(p, true), 1.0 / denom_exact);
    EXPECT_LT(compression_ratio(p, true), compression_ratio(p, false));
}

TEST(CompressionRatio, NoSparsityMeansNoSavings) {
    EXPECT_DOUBLE_EQ(compression_ratio(params(0.0, 0.0), false), 1.0);
    // The exact form still pays for the index map.
    EXPECT_LT(compression_ratio(params(0.0, 0.0), true), 1.0);
}

TEST(Speedups, PublishedOperatingPoints) {
    // Full sparsity: prefill 2.0× exactly, decode ≈ 1.78×.
    EXPECT_DOUBLE_EQ(prefill_speedup(params(1.0, 1.0)), 2.0);
    EXPECT_NEAR(decode_speedup(params(1.0, 1.0)), 1.78, 0.005);
    // (0.75, 0.75): prefill 1.6× exactly.
    EXPECT_DOUBLE_EQ(prefill_speedup(params(0.75, 0.75)), 1.6);
    // (0.5, 0.5): decode 1.28× exactly.
    EXPECT_DOUBLE_EQ(decode_speedup(params(0.5, 0.5)), 1.28);
    EXPECT_DOUBLE_EQ(prefill_speedup(params(0.0, 0.0)), 1.0);
}

TEST(Speedups, ThroughputConstantCancels) {
    CostParams slow = params(0.5, 0.75);
    CostParams fast = slow;
    slow.dense_throughput = 1.0;
    fast.dense_throughput = 312.0e12;
    EXPECT_DOUBLE_EQ(prefill_speedup(slow), prefill_speedup(fast));
    EXPECT_DOUBLE_EQ(decode_speedup(slow), decode_speedup(fast));
    EXPECT_DOUBLE_EQ(compression_ratio(slow, true), compression_ratio(fast, true));
}

TEST(Speedups, MonotoneAndBounded) {
    double prev_prefill = 0.0;
    double prev_decode = 0.0;
    for (double s = 0.0; s <= 1.0 + 1e-12; s += 0.125) {
        const CostParams p = params(s, s);
        const double sp = prefill_speedup(p);
        const double sd = decode_speedup(p);
        EXPECT_GT(sp, prev_prefill);
        EXPECT_GT(sd, prev_decode);
        EXPECT_GE(sp, 1.0);
        EXPECT_LE(sp, 2.0);
        EXPECT_GE(sd, 1.0);
        EXPECT_LE(sd, 1.0 / 0.5625 + 1e-12);
        prev_prefill = sp;
        prev_decode = sd;
    }
}

TEST(AnalyticSizes, MatchesMeasuredSizesOnWholeBlockSparsities) {
    // At sparsities that select whole block counts, the closed-form sizes
    // must equal the measured pooled sizes of both caches exactly.
    const std::size_t kL = 512, kD = 64, kB = 64;
    for (const double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        SparsityConfig cfg;
        cfg.block_size = kB;
        cfg.s_key = s;
        cfg.s_value = s;
        const Tensor2D key = random_gaussian(kL, kD, 40);
        const Tensor2D value = random_gaussian(kL, kD, 41);
        const auto [km, vm] = prune_cache(key, value, cfg);
        const SizeBreakdown ks = measure_size(compress(key, km, cfg, GroupAxis::kChannel));
        const SizeBreakdown vs = measure_size(compress(value, vm, cfg, GroupAxis::kSequence));

        const AnalyticSizes model = analytic_sizes(params(s, s, kL, kD, kB));
        EXPECT_DOUBLE_EQ(model.size_idx, static_cast<double>(ks.size_idx + vs.size_idx));
        EXPECT_DOUBLE_EQ(model.size_den, static_cast<double>(ks.size_den + vs.size_den));
        EXPECT_DOUBLE_EQ(model.size_nnz, static_cast<double>(ks.size_nnz + vs.size_nnz));
        EXPECT_DOUBLE_EQ(model.size_e, static_cast<double>(ks.size_e + vs.size_e));

        // And the measured compression ratio equals the exact model ratio.
        const double baseline = 2.0 * kL * kD * 2.0;
        const double measured = baseline / static_cast<double>(ks.total() + vs.total());
        EXPECT_NEAR(measured, compression_ratio(params(s, s, kL, kD, kB), true), 1e-12);
    }
}

TEST(DesignSpace, TableRowsArePinned) {
    const auto table = design_space_table();
    ASSERT_EQ(table.size(), 4u);

    EXPECT_EQ(table[0].config, "Naive");
    EXPECT_EQ(table[0].sparse_operands[0], "Q");
    EXPECT_EQ(table[0].sparse_operands[1], "P");
    EXPECT_DOUBLE_EQ(table[0].ideal_prefill, 2.0);
    EXPECT_DOUBLE_EQ(table[0].ideal_decode, 1.0);

    EXPECT_EQ(table[1].config, "Trans-K");
    EXPECT_EQ(table[1].sparse_operands[0], "K");
    EXPECT_EQ(table[1].sparse_operands[1], "P");
    EXPECT_DOUBLE_EQ(table[1].ideal_prefill, 2.0);
    EXPECT_DOUBLE_EQ(table[1].ideal_decode, 1.5);

    EXPECT_EQ(table[2].config, "Trans-V");
    EXPECT_EQ(table[2].sparse_operands[0], "Q");
    EXPECT_EQ(table[2].sparse_operands[1], "V");
    EXPECT_DOUBLE_EQ(table[2].ideal_prefill, 2.0);
    EXPECT_DOUBLE_EQ(table[2].ideal_decode, 1.5);

    EXPECT_EQ(table[3].config, "Trans-Both");
    EXPECT_EQ(table[3].sparse_operands[0], "K");
    EXPECT_EQ(table[3].sparse_operands[1], "V");
    EXPECT_DOUBLE_EQ(table[3].ideal_prefill, 2.0);
    EXPECT_DOUBLE_EQ(table[3].ideal_decode, 2.0);
}

TEST(CostReport, AssemblesAllPieces) {
    const CostParams p = params(0.5, 0.75);
    const CostReport r = cost_report(p);
    EXPECT_DOUBLE_EQ(r.r_comp_exact, compression_ratio(p, true));
    EXPECT_DOUBLE_EQ(r.r_comp_approx, compression_ratio(p, false));
    EXPECT_DOUBLE_EQ(r.speedup_prefill, prefill_speedup(p));
    EXPECT_DOUBLE_EQ(r.speedup_decode, decode_speedup(p));
    EXPECT_DOUBLE_EQ(r.sizes.total(), analytic_sizes(p).total());
    EXPECT_EQ(r.design_space[3].config, "Trans-Both");
}

TEST(CostParams, ValidateRejectsBadInputs) {
    EXPECT_THROW(compression_ratio(params(-0.1, 0.0), false), ConfigError);
    EXPECT_THROW(compression_ratio(params(0.0, 1.1), false), ConfigError);
    CostParams zero = params(0.5, 0.5);
    zero.seq_len = 0;
    EXPECT_THROW(analytic_sizes(zero), ConfigError);
    CostParams bad_tp = params(0.5, 0.5);
    bad_tp.dense_throughput = 0.0;
    EXPECT_THROW(prefill_speedup(bad_tp), ConfigError);
}

} // namespace
