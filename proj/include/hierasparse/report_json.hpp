// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON emission for reports.  Kept out of the core headers so the library
// itself has no third-party includes; only the CLI and tests pull this in.

#include <json.hpp>

#include "hierasparse/cost_model.hpp"
#include "hierasparse/pipeline.hpp"

namespace hierasparse {

inline nlohmann::json to_json(const SizeBreakdown& s) {
    return {{"size_idx", s.size_idx},
            {"size_den", s.size_den},
            {"size_nnz", s.size_nnz},
            {"size_e", s.size_e},
            {"total", s.total()}};
}

inline nlohmann::json to_json(const AnalyticSizes& s) {
    return {{"size_idx", s.size_idx},
            {"size_den", s.size_den},
            {"size_nnz", s.size_nnz},
            {"size_e", s.size_e},
            {"total", s.total()}};
}

inline nlohmann::json to_json(const AccuracyStats& a) {
    return {{"max_abs", a.max_abs}, {"mean_abs", a.mean_abs}};
}

inline nlohmann::json to_json(const OpCounts& c) {
    return {{"flops", c.flops}, {"bytes_moved", c.bytes_moved}};
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"seq_len", c.seq_len},
            {"head_dim", c.head_dim},
            {"heads", c.heads},
            {"gqa_group", c.gqa_group},
            {"block_size", c.block_size},
            {"s_key_prefill", c.s_key_prefill},
            {"s_value_prefill", c.s_value_prefill},
            {"s_key_decode", c.s_key_decode},
            {"s_value_decode", c.s_value_decode},
            {"sink_tokens", c.sink_tokens},
            {"local_window", c.local_window},
            {"b_r", c.b_r},
            {"splits", c.splits},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const RunReport& r, bool include_timings) {
    nlohmann::json j{
        {"schema_version", RunReport::kSchemaVersion},
        {"config", to_json(r.config)},
        {"compression",
         {{"measured_sizes", to_json(r.measured_sizes)},
          {"dense_baseline_bytes", r.dense_baseline_bytes},
          {"r_comp_measured", r.r_comp_measured},
          {"r_comp_model_exact", r.r_comp_model_exact},
          {"r_comp_model_approx", r.r_comp_model_approx}}},
        {"accuracy",
         {{"prefill_vs_decompressed", to_json(r.prefill_vs_decompressed)},
          {"prefill_vs_raw", to_json(r.prefill_vs_raw)},
          {"decode_vs_decompressed", to_json(r.decode_vs_decompressed)},
          {"decode_vs_raw", to_json(r.decode_vs_raw)}}},
        {"counts",
         {{"prefill", to_json(r.prefill_counts)},
          {"decode", to_json(r.decode_counts)},
          {"model_speedup_prefill", r.model_speedup_prefill},
          {"model_speedup_decode", r.model_speedup_decode}}},
    };
    if (include_timings) {
        j["timings"] = {{"prune_ms", r.timings.prune_ms},
                        {"compress_ms", r.timings.compress_ms},
                        {"prefill_ms", r.timings.prefill_ms},
                        {"decode_ms", r.timings.decode_ms},
                        {"total_ms", r.timings.total_ms}};
    }
    return j;
}

inline nlohmann::json to_json(const DesignSpaceRow& row) {
    return {{"config", row.config},
            {"sparse_operands", row.sparse_operands},
            {"ideal_prefill", row.ideal_prefill},
            {"ideal_decode", row.ideal_decode}};
}

inline nlohmann::json to_json(const CostReport& r) {
    nlohmann::json table = nlohmann::json::array();
    for (const DesignSpaceRow& row : r.design_space) table.push_back(to_json(row));
    return {{"params",
             {{"seq_len", r.params.seq_len},
              {"hidden_dim", r.params.hidden_dim},
              {"block_size", r.params.block_size},
              {"s_key", r.params.s_key},
              {"s_value", r.params.s_value}}},
            {"sizes", to_json(r.sizes)},
            {"r_comp_exact", r.r_comp_exact},
            {"r_comp_approx", r.r_comp_approx},
            {"speedup_prefill", r.speedup_prefill},
            {"speedup_decode", r.speedup_decode},
            {"design_space", table}};
}

} // namespace hierasparse
