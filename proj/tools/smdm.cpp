// smdm: verify | bench | sample | train | dump-mask | checksum
//
// Exit codes: 0 success, 1 verification or run failure, 2 usage error.

#include "smdm/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

using namespace smdm;
using io::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flags given on the command line win over keys of the --config file.
class ConfigMerge {
public:
    explicit ConfigMerge(const std::string& path) {
        if (!path.empty()) {
            j_ = json::parse(io::read_file(path));
            if (!j_.is_object()) {
                throw UsageError("--config: expected a JSON object");
            }
        }
    }

    template <typename V>
    void apply(const char* key, V& var, const CLI::Option* opt) const {
        if (j_.contains(key) && opt->count() == 0) {
            var = j_.at(key).get<V>();
        }
    }

    const json& raw() const { return j_; }

private:
    json j_ = json::object();
};

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        io::write_file(path, text);
    }
}

std::vector<TokenId> parse_ids(const std::string& s) {
    std::vector<TokenId> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(static_cast<TokenId>(std::stol(item)));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
    std::string config;
    int trials = 100;
    std::uint64_t seed = 0;
    bool inject_fault = false;
    CLI::Option *o_trials, *o_seed, *o_fault;
};

int run_verify(VerifyArgs& a) {
    ConfigMerge cm(a.config);
    cm.apply("trials", a.trials, a.o_trials);
    cm.apply("seed", a.seed, a.o_seed);
    cm.apply("inject_fault", a.inject_fault, a.o_fault);
    if (a.trials < 0) {
        throw UsageError("--trials must be >= 0");
    }
    const auto rep = verify({a.seed, a.trials, a.inject_fault});
    if (rep.vacuous) {
        std::cerr << "warning: trials=0, every suite passes vacuously\n";
    }
    for (const auto& s : rep.suites) {
        std::printf("%-18s %s  checks=%zu", s.name.c_str(), s.passed ? "PASS" : "FAIL", s.checks);
        if (s.name == "cache-equivalence") {
            std::printf("  max_abs_f32=%.3g", s.max_error);
        }
        std::printf("\n");
        for (const auto& f : s.failures) {
            std::printf("    %s\n", f.c_str());
        }
    }
    return rep.passed() ? 0 : 1;
}

struct BenchArgs {
    std::string config, out;
    BenchConfig cfg;
    bool grid = false;
    bool no_cache_prompt = false, no_cache_response = false, no_truncate = false;
    CLI::Option *o_L, *o_S, *o_K, *o_m, *o_rep, *o_seed;
};

int run_bench(BenchArgs& a) {
    ConfigMerge cm(a.config);
    cm.apply("L", a.cfg.L, a.o_L);
    cm.apply("S", a.cfg.S, a.o_S);
    cm.apply("K", a.cfg.K, a.o_K);
    cm.apply("m", a.cfg.m, a.o_m);
    cm.apply("repeats", a.cfg.repeats, a.o_rep);
    cm.apply("seed", a.cfg.seed, a.o_seed);
    if (cm.raw().contains("model")) {
        a.cfg.model = io::model_config_from_json(cm.raw().at("model"), a.cfg.model);
    }
    std::vector<AblationToggle> toggles;
    if (a.grid) {
        toggles = AblationToggle::grid();
    } else {
        toggles.push_back({!a.no_cache_prompt, !a.no_cache_response, !a.no_truncate});
    }
    const auto rep = bench(a.cfg, toggles);
    std::ostringstream os;
    os << "cache_prompt,cache_response,truncate_response,token_forwards,instrumented,wall_ms,token_speedup,wall_speedup\n";
    bool exact = true;
    for (const auto& r : rep.rows) {
        char line[256];
        std::snprintf(line, sizeof line, "%d,%d,%d,%zu,%zu,%.3f,%.4f,%.4f\n", r.toggle.cache_prompt,
                      r.toggle.cache_response, r.toggle.truncate_response, r.analytic, r.instrumented, r.wall_ms,
                      r.token_speedup, r.wall_speedup);
        os << line;
        exact = exact && r.analytic == r.instrumented;
    }
    emit(a.out, os.str());
    if (!exact) {
        std::cerr << "error: analytic and instrumented token counts differ\n";
    }
    return exact ? 0 : 1;
}

struct SampleArgs {
    std::string config, task = "pregen2d", out, trace, model_path, prompt, rule = "greedy";
    int H = 8, W = 8, K = 8, L = 0, m = 4, block_size = 8, steps_per_block = 4;
    bool reverse_blocks = false;
    std::uint64_t seed = 0;
    CLI::Option *o_task, *o_H, *o_W, *o_K, *o_L, *o_m, *o_bs, *o_spb, *o_seed, *o_rule;
};

int run_sample(SampleArgs& a) {
    ConfigMerge cm(a.config);
    cm.apply("task", a.task, a.o_task);
    cm.apply("H", a.H, a.o_H);
    cm.apply("W", a.W, a.o_W);
    cm.apply("K", a.K, a.o_K);
    cm.apply("L", a.L, a.o_L);
    cm.apply("m", a.m, a.o_m);
    cm.apply("block_size", a.block_size, a.o_bs);
    cm.apply("steps_per_block", a.steps_per_block, a.o_spb);
    cm.apply("seed", a.seed, a.o_seed);
    cm.apply("rule", a.rule, a.o_rule);
    if (a.task != "pregen2d" && a.task != "semi-ar") {
        throw UsageError("--task must be pregen2d or semi-ar");
    }
    if (a.rule != "greedy" && a.rule != "categorical") {
        throw UsageError("--rule must be greedy or categorical");
    }
    const int L = a.task == "pregen2d" ? a.H * a.W : (a.L > 0 ? a.L : a.H * a.W);

    Rng rng(a.seed);
    std::optional<Model<float>> model;
    if (!a.model_path.empty()) {
        model = io::load_model<float>(a.model_path);
    } else {
        TrainConfig tc;
        tc.grid_h = a.H;
        tc.grid_w = a.W;
        auto mc = grid_model_config(tc);
        mc.seed = a.seed;
        model.emplace(mc);
    }
    std::vector<TokenId> prompt;
    if (!a.prompt.empty()) {
        prompt = parse_ids(a.prompt);
    } else if (model->config().vocab == GridPatternTask::vocabulary()) {
        prompt = GridPatternTask{a.H, a.W}.random_prompt(rng);
    }
    const auto& mc = model->config();
    if (static_cast<int>(prompt.size()) + L + a.m > mc.max_position) {
        throw UsageError("prompt + response + registers exceed the model's max_position");
    }
    const auto rule = a.rule == "greedy" ? DecodeRule::greedy : DecodeRule::categorical;

    SampleResult res;
    if (a.task == "pregen2d") {
        const auto order = pregen_order_2d(a.H, a.W, a.K, rng());
        res = sample_pregen(*model, prompt, L, order, discretize_schedule(a.K), a.m, rng, rule);
    } else {
        SemiARConfig sc;
        sc.block_size = a.block_size;
        sc.steps_per_block = a.steps_per_block;
        sc.rule = rule;
        if (a.reverse_blocks) {
            for (int b = sc.num_blocks(L) - 1; b >= 0; --b) {
                sc.block_order.push_back(b);
            }
        }
        res = sample_semi_ar(*model, prompt, L, sc, a.m, rng);
    }
    json out = {{"prompt", prompt}, {"response", res.response.tokens}, {"token_forwards", res.token_forwards}};
    emit(a.out, out.dump() + "\n");
    if (!a.trace.empty()) {
        io::write_file(a.trace, io::to_json(res).dump(1) + "\n");
    }
    return 0;
}

struct TrainArgs {
    std::string config, metrics, checkpoint, report;
    int steps = -1, batch_size = -1;
    double lr = -1.0;
    std::uint64_t seed = 0;
    CLI::Option* o_seed;
};

int run_train(TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        cfg = io::train_config_from_json(json::parse(io::read_file(a.config)));
    }
    if (a.steps >= 0) {
        cfg.steps = a.steps;
    }
    if (a.batch_size > 0) {
        cfg.batch_size = a.batch_size;
    }
    if (a.lr > 0.0) {
        cfg.lr = a.lr;
    }
    if (a.o_seed->count() > 0) {
        cfg.seed = a.seed;
    }
    cfg.validate();

    std::ostringstream csv;
    csv << "step,loss,lr\n";
    Model<float> model;
    const auto rep = train_toy<float>(cfg, model, [&](const TrainStepInfo& s) {
        char line[96];
        std::snprintf(line, sizeof line, "%d,%.6f,%.6g\n", s.step, s.loss, s.lr);
        csv << line;
    });
    if (!a.metrics.empty()) {
        io::write_file(a.metrics, csv.str());
    }
    if (!a.checkpoint.empty()) {
        io::save_model(a.checkpoint, model);
    }
    json summary = {{"initial_loss", rep.initial_eval_loss},
                    {"final_loss", rep.final_eval_loss},
                    {"validity", rep.validity},
                    {"diverged", rep.diverged},
                    {"steps", rep.losses.size()},
                    {"checksum", rep.checksum}};
    if (!a.report.empty()) {
        io::write_file(a.report, summary.dump(1) + "\n");
    }
    std::printf("initial_loss=%.4f final_loss=%.4f validity=%.3f%s\n", rep.initial_eval_loss, rep.final_eval_loss,
                rep.validity, rep.diverged ? " DIVERGED" : "");
    return rep.diverged ? 1 : 0;
}

struct DumpArgs {
    bool golden = false, inference = false;
    int path_block = -1;
    int n_cache = 0, n_new = 0, n_decode = 1, m = 0, scale = 8;
    std::string format = "csv", out;
};

int run_dump(DumpArgs& a) {
    const int modes = (a.golden ? 1 : 0) + (a.inference ? 1 : 0) + (a.path_block >= 0 ? 1 : 0);
    if (modes != 1) {
        throw UsageError("dump-mask: choose exactly one of --golden, --inference, --golden-path");
    }
    AttentionMask mask;
    if (a.golden) {
        mask = golden_merged_mask();
    } else if (a.path_block >= 0) {
        mask = extract_path_mask(golden_assignment(), a.path_block);
    } else {
        if (a.n_cache < 0 || a.n_new < 0 || a.n_decode < 0 || a.m < 0) {
            throw UsageError("dump-mask: counts must be >= 0");
        }
        mask = build_inference_mask(static_cast<std::size_t>(a.n_cache), static_cast<std::size_t>(a.n_new),
                                    static_cast<std::size_t>(a.n_decode), static_cast<std::size_t>(a.m));
    }
    if (a.format == "csv") {
        emit(a.out, io::mask_to_csv(mask));
    } else if (a.format == "pgm") {
        emit(a.out, io::mask_to_pgm(mask, a.scale));
    } else {
        throw UsageError("--format must be csv or pgm");
    }
    return 0;
}

struct ChecksumArgs {
    std::string model_path, config;
};

int run_checksum(ChecksumArgs& a) {
    if (a.model_path.empty() == a.config.empty()) {
        throw UsageError("checksum: give exactly one of --model or --config");
    }
    const auto model = a.model_path.empty()
                           ? Model<float>(io::model_config_from_json(json::parse(io::read_file(a.config))))
                           : io::load_model<float>(a.model_path);
    std::printf("%016llx\n", static_cast<unsigned long long>(model.checksum()));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse masked-diffusion engine: verification, ablation bench, sampling, training"};
    app.require_subcommand(1);

    VerifyArgs va;
    auto* verify_cmd = app.add_subcommand("verify", "Run the equivalence and mask oracle suites");
    verify_cmd->add_option("--config", va.config, "JSON file with trials/seed/inject_fault");
    va.o_trials = verify_cmd->add_option("--trials", va.trials, "Random instances per suite");
    va.o_seed = verify_cmd->add_option("--seed", va.seed);
    va.o_fault = verify_cmd->add_flag("--inject-fault", va.inject_fault, "Corrupt one mask cell (negative control)");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "Token accounting and wall clock over cache/truncation toggles");
    bench_cmd->add_option("--config", ba.config, "JSON file with L/S/K/m/repeats/seed/model");
    ba.o_L = bench_cmd->add_option("--L", ba.cfg.L, "Response length");
    ba.o_S = bench_cmd->add_option("--S", ba.cfg.S, "Prompt length");
    ba.o_K = bench_cmd->add_option("--K", ba.cfg.K, "Decoding steps");
    ba.o_m = bench_cmd->add_option("--m", ba.cfg.m, "Register tokens");
    ba.o_rep = bench_cmd->add_option("--repeats", ba.cfg.repeats, "Timed runs per row (median reported)");
    ba.o_seed = bench_cmd->add_option("--seed", ba.cfg.seed);
    bench_cmd->add_flag("--grid", ba.grid, "All eight toggle combinations");
    bench_cmd->add_flag("--no-cache-prompt", ba.no_cache_prompt);
    bench_cmd->add_flag("--no-cache-response", ba.no_cache_response);
    bench_cmd->add_flag("--no-truncate", ba.no_truncate);
    bench_cmd->add_option("--out", ba.out, "CSV output path (default stdout)");

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "Generate one response");
    sample_cmd->add_option("--config", sa.config, "JSON file with sampler options");
    sa.o_task = sample_cmd->add_option("--task", sa.task, "pregen2d | semi-ar");
    sa.o_H = sample_cmd->add_option("--H", sa.H, "Grid height");
    sa.o_W = sample_cmd->add_option("--W", sa.W, "Grid width");
    sa.o_K = sample_cmd->add_option("--K", sa.K, "Steps (pregen2d)");
    sa.o_L = sample_cmd->add_option("--L", sa.L, "Response length (semi-ar; default H*W)");
    sa.o_m = sample_cmd->add_option("--m", sa.m, "Register tokens");
    sa.o_bs = sample_cmd->add_option("--block-size", sa.block_size, "Semi-AR block size");
    sa.o_spb = sample_cmd->add_option("--steps-per-block", sa.steps_per_block, "Semi-AR steps per block");
    sample_cmd->add_flag("--reverse-blocks", sa.reverse_blocks, "Semi-AR right-to-left block order");
    sa.o_seed = sample_cmd->add_option("--seed", sa.seed);
    sa.o_rule = sample_cmd->add_option("--rule", sa.rule, "greedy | categorical");
    sample_cmd->add_option("--model", sa.model_path, "Checkpoint (default: fresh model from --seed)");
    sample_cmd->add_option("--prompt", sa.prompt, "Comma-separated prompt ids");
    sample_cmd->add_option("--out", sa.out, "Output JSON path (default stdout)");
    sample_cmd->add_option("--trace", sa.trace, "Per-step trace JSON path");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Toy training run on the grid-pattern task");
    train_cmd->add_option("--config", ta.config, "TrainConfig JSON");
    train_cmd->add_option("--steps", ta.steps);
    train_cmd->add_option("--batch-size", ta.batch_size);
    train_cmd->add_option("--lr", ta.lr);
    ta.o_seed = train_cmd->add_option("--seed", ta.seed);
    train_cmd->add_option("--metrics", ta.metrics, "CSV: step,loss,lr");
    train_cmd->add_option("--checkpoint", ta.checkpoint, "Model output path");
    train_cmd->add_option("--report", ta.report, "Summary JSON path");

    DumpArgs da;
    auto* dump_cmd = app.add_subcommand("dump-mask", "Write an attention mask as CSV or PGM");
    dump_cmd->add_flag("--golden,--fig7", da.golden, "Golden merged training mask");
    dump_cmd->add_option("--golden-path,--fig7-path", da.path_block, "Extracted inference mask of the golden fixture for a masked block");
    dump_cmd->add_flag("--inference", da.inference, "Inference mask from counts");
    dump_cmd->add_option("--cache", da.n_cache);
    dump_cmd->add_option("--new", da.n_new);
    dump_cmd->add_option("--decode", da.n_decode);
    dump_cmd->add_option("--m", da.m);
    dump_cmd->add_option("--format", da.format, "csv | pgm");
    dump_cmd->add_option("--scale", da.scale, "PGM pixels per cell");
    dump_cmd->add_option("--out", da.out, "Output path (default stdout)");

    ChecksumArgs ca;
    auto* checksum_cmd = app.add_subcommand("checksum", "Parameter checksum of a model file or a fresh init");
    checksum_cmd->add_option("--model", ca.model_path);
    checksum_cmd->add_option("--config", ca.config, "ModelConfig JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*verify_cmd) {
            return run_verify(va);
        }
        if (*bench_cmd) {
            return run_bench(ba);
        }
        if (*sample_cmd) {
            return run_sample(sa);
        }
        if (*train_cmd) {
            return run_train(ta);
        }
        if (*dump_cmd) {
            return run_dump(da);
        }
        return run_checksum(ca);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "bad JSON: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
