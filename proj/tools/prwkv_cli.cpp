#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "prwkv/bench.hpp"
#include "prwkv/config.hpp"
#include "prwkv/dataset.hpp"
#include "prwkv/gradcheck.hpp"
#include "prwkv/model.hpp"
#include "prwkv/pointops.hpp"
#include "prwkv/train.hpp"

namespace {

struct CommonOpts {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "run";
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config, "config file (key = value lines)");
    if (config_required) c->required();
    cmd->add_option("--seed", opts.seed, "run seed");
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--threads", opts.threads, "worker threads for evaluation");
}

prwkv::RunConfig load_config(const CommonOpts& opts) {
    if (opts.config.empty()) return prwkv::RunConfig{};
    return prwkv::parse_config_file(opts.config);
}

int run_pretrain(const CommonOpts& opts) {
    prwkv::RunConfig cfg = load_config(opts);
    auto result = prwkv::pretrain(cfg, opts.seed, opts.out, opts.threads);
    std::cout << "pretrain: " << result.losses.size() << " epochs, final loss "
              << (result.losses.empty() ? 0.0 : result.losses.back().loss) << ", checkpoint "
              << result.checkpoint_path << "\n";
    return 0;
}

int run_train_cls(const CommonOpts& opts) {
    prwkv::RunConfig cfg = load_config(opts);
    auto result = prwkv::train_cls(cfg, opts.seed, opts.out, opts.threads);
    const auto& last = result.accuracy.back();
    std::cout << "train-cls: " << result.accuracy.size() << " epochs, train_acc " << last.train_acc
              << ", test_acc " << last.test_acc;
    if (result.epochs_to_target > 0) std::cout << ", reached target at epoch " << result.epochs_to_target;
    std::cout << ", checkpoint " << result.checkpoint_path << "\n";
    return 0;
}

int run_eval(const CommonOpts& opts, const std::string& checkpoint_flag) {
    prwkv::RunConfig cfg = load_config(opts);
    std::string ckpt = !checkpoint_flag.empty() ? checkpoint_flag : cfg.train.checkpoint;
    if (ckpt.empty()) throw std::invalid_argument("eval: no checkpoint given (flag --checkpoint or config key)");
    prwkv::Model model = prwkv::build_model(cfg.model, opts.seed);
    prwkv::load_checkpoint(model.store, ckpt, /*strict=*/false);
    prwkv::SyntheticDataset data = prwkv::make_classification_dataset(
        cfg.model.classes, cfg.train.train_per_class, cfg.train.test_per_class, cfg.train.points,
        cfg.train.jitter, prwkv::derive_seed(opts.seed, 0x64617461ULL));
    const double acc = prwkv::evaluate_accuracy(model, data.test, opts.threads);
    std::cout << "eval: test_acc " << acc << " over " << data.test.size() << " samples\n";
    return 0;
}

int run_bench_scaling(const CommonOpts& opts, std::vector<std::int64_t> ts, int c, int heads,
                      int reps, bool f32) {
    if (ts.empty()) ts = {256, 512, 1024, 2048, 4096};
    auto records = prwkv::bench_scaling(ts, c, heads, reps, opts.seed ? opts.seed : 1, f32);
    std::filesystem::create_directories(opts.out);
    const std::string path = opts.out + "/scaling.csv";
    prwkv::write_scaling_csv(path, records);
    for (const auto& r : records) {
        std::cout << "T=" << r.t << " flops_linear=" << r.flops_linear
                  << " flops_quadratic=" << r.flops_quadratic << " time_linear_ms=" << r.time_linear_ms
                  << " time_quadratic_ms=" << r.time_quadratic_ms << "\n";
    }
    std::cout << "wrote " << path << "\n";
    return 0;
}

int run_graph_check(const std::string& input, double radius) {
    prwkv::PointCloud pc = prwkv::load_cloud(input);
    prwkv::RadiusGraph fast = prwkv::radius_graph_celllist(pc, radius);
    prwkv::RadiusGraph slow = prwkv::radius_graph_bruteforce(pc, radius);
    const bool match = fast.edges == slow.edges;
    std::cout << "graph-check: points=" << pc.size() << " radius=" << radius
              << " edges=" << fast.edges.size() << " oracle=" << (match ? "match" : "MISMATCH")
              << "\n";
    return match ? 0 : 1;
}

int run_gradcheck(const CommonOpts& opts) {
    auto results = prwkv::run_gradient_suite(opts.seed ? opts.seed : 11);
    bool all_ok = true;
    for (const auto& r : results) {
        std::printf("%-40s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_err, r.tolerance,
                    r.ok ? "ok" : "FAIL");
        all_ok = all_ok && r.ok;
    }
    std::cout << (all_ok ? "gradcheck: all checks passed" : "gradcheck: FAILURES present") << "\n";
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud learner with bidirectional linear-attention mixing"};
    app.require_subcommand(1);

    CommonOpts pre_opts, cls_opts, eval_opts, bench_opts, grad_opts;
    std::string eval_checkpoint;
    std::vector<std::int64_t> bench_ts;
    int bench_c = 64, bench_heads = 4, bench_reps = 5;
    bool bench_f32 = false;
    std::string gc_input;
    double gc_radius = 0.1;

    auto* pre = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
    add_common(pre, pre_opts);

    auto* cls = app.add_subcommand("train-cls", "classification training");
    add_common(cls, cls_opts);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the synthetic test split");
    add_common(ev, eval_opts);
    ev->add_option("--checkpoint", eval_checkpoint, "checkpoint to load (overrides config key)");

    auto* bench = app.add_subcommand("bench-scaling", "linear vs quadratic kernel scaling");
    add_common(bench, bench_opts, /*config_required=*/false);
    bench->add_option("--lengths", bench_ts, "sequence lengths (ascending)");
    bench->add_option("--width", bench_c, "channel width");
    bench->add_option("--heads", bench_heads, "head count");
    bench->add_option("--reps", bench_reps, "timing repetitions (median)");
    bench->add_flag("--f32", bench_f32, "time the float32 kernels");

    auto* gc = app.add_subcommand("graph-check", "radius graph vs brute-force oracle");
    gc->add_option("--input", gc_input, "point-cloud file (text or PCB1 binary)")->required();
    gc->add_option("--radius", gc_radius, "neighbor radius")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(grad, grad_opts, /*config_required=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) return run_pretrain(pre_opts);
        if (cls->parsed()) return run_train_cls(cls_opts);
        if (ev->parsed()) return run_eval(eval_opts, eval_checkpoint);
        if (bench->parsed())
            return run_bench_scaling(bench_opts, bench_ts, bench_c, bench_heads, bench_reps, bench_f32);
        if (gc->parsed()) return run_graph_check(gc_input, gc_radius);
        if (grad->parsed()) return run_gradcheck(grad_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
