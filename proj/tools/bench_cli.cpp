// SPDX-License-Identifier: Apache-2.0
//
// Benchmark harness: synthetic prune/compress/attend runs against the dense
// oracle, closed-form cost reports and sweeps, and cache-container I/O.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 data error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hierasparse/hierasparse.hpp"
#include "hierasparse/report_json.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;

// Relative output paths resolve against HIERASPARSE_OUT_DIR when it is set.
std::string resolve_out_path(const std::string& path) {
    if (path.empty() || path.front() == '/') return path;
    const char* dir = std::getenv("HIERASPARSE_OUT_DIR");
    if (!dir || !*dir) return path;
    std::string full(dir);
    if (full.back() != '/') full.push_back('/');
    return full + path;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text << "\n";
        return;
    }
    const std::string full = resolve_out_path(out_path);
    std::ofstream f(full);
    if (!f) throw hierasparse::IoError("cannot open '" + full + "' for writing");
    f << text << "\n";
    if (!f) throw hierasparse::IoError("short write to '" + full + "'");
}

void add_sparsity_bounds(CLI::App* cmd, double* value, const std::string& name,
                         const std::string& help) {
    cmd->add_option(name, *value, help)->check(CLI::Range(0.0, 1.0));
}

// Shared generation parameters for save-cache.
struct CacheGenConfig {
    std::size_t seq_len = 512;
    std::size_t head_dim = 64;
    std::size_t block_size = 64;
    double s_key = 0.5;
    double s_value = 0.5;
    std::size_t sink_tokens = 0;
    std::size_t local_window = 0;
    std::uint64_t seed = 1;
};

int run_main(const hierasparse::RunConfig& cfg, bool omit_timings) {
    const hierasparse::RunReport report = hierasparse::run_pipeline(cfg);
    emit(hierasparse::to_json(report, !omit_timings).dump(2), cfg.output_path);
    return 0;
}

int cost_main(const hierasparse::CostParams& params, const std::string& out_path) {
    emit(hierasparse::to_json(hierasparse::cost_report(params)).dump(2), out_path);
    return 0;
}

int sweep_main(hierasparse::CostParams params, double step, bool csv,
               const std::string& out_path) {
    hierasparse::detail::check_config(step > 0.0 && step <= 1.0,
                                      "sweep: step must lie in (0, 1]");
    std::vector<double> grid;
    for (double s = 0.0; s < 1.0 + step / 2; s += step) grid.push_back(std::min(s, 1.0));

    if (csv) {
        std::ostringstream out;
        out << "s_key,s_value,r_comp_exact,r_comp_approx,speedup_prefill,speedup_decode";
        out.precision(17);
        for (double sk : grid) {
            for (double sv : grid) {
                params.s_key = sk;
                params.s_value = sv;
                out << "\n"
                    << sk << "," << sv << "," << hierasparse::compression_ratio(params, true)
                    << "," << hierasparse::compression_ratio(params, false) << ","
                    << hierasparse::prefill_speedup(params) << ","
                    << hierasparse::decode_speedup(params);
            }
        }
        emit(out.str(), out_path);
        return 0;
    }

    nlohmann::json rows = nlohmann::json::array();
    for (double sk : grid) {
        for (double sv : grid) {
            params.s_key = sk;
            params.s_value = sv;
            rows.push_back(hierasparse::to_json(hierasparse::cost_report(params)));
        }
    }
    emit(rows.dump(2), out_path);
    return 0;
}

int save_cache_main(const CacheGenConfig& gen, const std::string& out_stem) {
    using namespace hierasparse;
    detail::check_config(gen.seq_len > 0 && gen.seq_len % gen.block_size == 0,
                         "save-cache: seq_len must be a positive multiple of block_size");

    SparsityConfig cfg;
    cfg.s_key = gen.s_key;
    cfg.s_value = gen.s_value;
    cfg.block_size = gen.block_size;
    cfg.sink_tokens = gen.sink_tokens;
    cfg.local_window = gen.local_window;

    const Tensor2D key = random_gaussian(gen.seq_len, gen.head_dim, derive_seed(gen.seed, 0));
    const Tensor2D value = random_gaussian(gen.seq_len, gen.head_dim, derive_seed(gen.seed, 1));
    const auto [key_mask, value_mask] = prune_cache(key, value, cfg);
    const CompressedCache key_comp = compress(key, key_mask, cfg, GroupAxis::kChannel);
    const CompressedCache value_comp = compress(value, value_mask, cfg, GroupAxis::kSequence);

    const std::string stem = resolve_out_path(out_stem);
    save_cache(stem + ".key.hsc", key_comp);
    save_cache(stem + ".value.hsc", value_comp);

    const nlohmann::json summary{
        {"key_path", stem + ".key.hsc"},
        {"value_path", stem + ".value.hsc"},
        {"key_sizes", to_json(measure_size(key_comp))},
        {"value_sizes", to_json(measure_size(value_comp))},
        {"key_blocks", {{"dense", key_comp.dense_count}, {"sparse", key_comp.sparse_count}}},
        {"value_blocks",
         {{"dense", value_comp.dense_count}, {"sparse", value_comp.sparse_count}}},
    };
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int load_cache_main(const std::string& in_path) {
    using namespace hierasparse;
    const CompressedCache c = load_cache(in_path);
    const Tensor2D dense = decompress(c);

    double abs_sum = 0.0;
    double max_abs = 0.0;
    for (float v : dense.data) {
        abs_sum += std::fabs(static_cast<double>(v));
        max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
    }
    const nlohmann::json summary{
        {"path", in_path},
        {"block_size", c.cfg.block_size},
        {"head_dim", c.head_dim},
        {"logical_blocks", c.logical_blocks},
        {"dense_blocks", c.dense_count},
        {"sparse_blocks", c.sparse_count},
        {"axis", c.axis == GroupAxis::kChannel ? "channel" : "sequence"},
        {"sizes", to_json(measure_size(c))},
        {"decompressed", {{"rows", dense.rows}, {"cols", dense.cols}, {"abs_sum", abs_sum},
                          {"max_abs", max_abs}}},
    };
    std::cout << summary.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical 2:4 KV-cache pruning benchmark harness"};
    app.require_subcommand(1);

    // --- run ----------------------------------------------------------------
    hierasparse::RunConfig run_cfg;
    bool omit_timings = false;
    CLI::App* run = app.add_subcommand("run", "full prune/compress/attend pipeline");
    run->add_option("--seq-len", run_cfg.seq_len, "sequence length");
    run->add_option("--head-dim", run_cfg.head_dim, "head dimension");
    run->add_option("--heads", run_cfg.heads, "KV heads");
    run->add_option("--gqa-group", run_cfg.gqa_group, "query heads per KV head");
    run->add_option("--block-size", run_cfg.block_size, "tokens per cache block");
    add_sparsity_bounds(run, &run_cfg.s_key_prefill, "--s-key-prefill",
                        "prefill key block sparsity");
    add_sparsity_bounds(run, &run_cfg.s_value_prefill, "--s-value-prefill",
                        "prefill value block sparsity");
    add_sparsity_bounds(run, &run_cfg.s_key_decode, "--s-key-decode",
                        "decode key block sparsity");
    add_sparsity_bounds(run, &run_cfg.s_value_decode, "--s-value-decode",
                        "decode value block sparsity");
    run->add_option("--sink-tokens", run_cfg.sink_tokens, "protected leading tokens");
    run->add_option("--local-window", run_cfg.local_window, "protected trailing tokens");
    run->add_option("--b-r", run_cfg.b_r, "query tile rows");
    run->add_option("--splits", run_cfg.splits, "decode split-KV count");
    run->add_option("--seed", run_cfg.seed, "RNG seed");
    run->add_option("--out", run_cfg.output_path, "report file (default: stdout)");
    run->add_flag("--omit-timings", omit_timings, "drop wall-clock timings from the report");
    run->callback([&] { run_main(run_cfg, omit_timings); });

    // --- cost / sweep ---------------------------------------------------------
    hierasparse::CostParams cost_params;
    std::string cost_out;
    CLI::App* cost = app.add_subcommand("cost", "closed-form cost report for one point");
    cost->add_option("--seq-len", cost_params.seq_len, "L");
    cost->add_option("--hidden-dim", cost_params.hidden_dim, "D");
    cost->add_option("--block-size", cost_params.block_size, "B");
    add_sparsity_bounds(cost, &cost_params.s_key, "--s-key", "key block sparsity S_K");
    add_sparsity_bounds(cost, &cost_params.s_value, "--s-value", "value block sparsity S_V");
    cost->add_option("--out", cost_out, "report file (default: stdout)");
    cost->callback([&] { cost_main(cost_params, cost_out); });

    hierasparse::CostParams sweep_params;
    double sweep_step = 0.25;
    bool sweep_csv = false;
    std::string sweep_out;
    CLI::App* sweep = app.add_subcommand("sweep", "cost reports over an (S_K, S_V) grid");
    sweep->add_option("--seq-len", sweep_params.seq_len, "L");
    sweep->add_option("--hidden-dim", sweep_params.hidden_dim, "D");
    sweep->add_option("--block-size", sweep_params.block_size, "B");
    sweep->add_option("--step", sweep_step, "grid step over [0, 1]")
        ->check(CLI::Range(0.001, 1.0));
    sweep->add_flag("--csv", sweep_csv, "emit a flat CSV table instead of JSON");
    sweep->add_option("--out", sweep_out, "report file (default: stdout)");
    sweep->callback([&] { sweep_main(sweep_params, sweep_step, sweep_csv, sweep_out); });

    // --- save-cache / load-cache ----------------------------------------------
    CacheGenConfig gen;
    std::string save_stem;
    CLI::App* save = app.add_subcommand("save-cache",
                                        "generate, prune, compress, and serialize a cache pair");
    save->add_option("--seq-len", gen.seq_len, "sequence length (multiple of block size)");
    save->add_option("--head-dim", gen.head_dim, "head dimension");
    save->add_option("--block-size", gen.block_size, "tokens per cache block");
    add_sparsity_bounds(save, &gen.s_key, "--s-key", "key block sparsity");
    add_sparsity_bounds(save, &gen.s_value, "--s-value", "value block sparsity");
    save->add_option("--sink-tokens", gen.sink_tokens, "protected leading tokens");
    save->add_option("--local-window", gen.local_window, "protected trailing tokens");
    save->add_option("--seed", gen.seed, "RNG seed");
    save->add_option("--out", save_stem, "output stem; writes <stem>.key.hsc and <stem>.value.hsc")
        ->required();
    save->callback([&] { save_cache_main(gen, save_stem); });

    std::string load_path;
    CLI::App* load = app.add_subcommand("load-cache", "parse a cache container and summarize it");
    load->add_option("--in", load_path, "container file path")->required();
    load->callback([&] { load_cache_main(load_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const hierasparse::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const hierasparse::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const hierasparse::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
