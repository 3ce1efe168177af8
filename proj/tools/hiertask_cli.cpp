// Command-line harness: single runs, sweeps, checkpoint evaluation, chart
// emission, head accounting and synthetic data generation.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hiertask/checkpoint.hpp"
#include "hiertask/experiment.hpp"
#include "hiertask/svg_plot.hpp"

namespace {

using namespace hiertask;

std::filesystem::path default_out_root() {
    if (const char* env = std::getenv("HIERTASK_OUT")) return env;
    return "out";
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void print_epoch(const EpochRecord& r) {
    std::cout << "epoch=" << r.epoch << " train_loss=" << fmt_g(r.train_loss)
              << " val_model_acc=" << fmt_g(r.val_model_acc)
              << " val_make_acc=" << fmt_g(r.val_make_acc) << " lr=" << fmt_g(r.lr) << "\n";
}

void print_metrics(const MetricsReport& m) {
    std::cout << "n_samples=" << m.n_samples << "\n";
    std::cout << "model_acc=" << fmt_g(m.model_acc) << "\n";
    if (m.make_acc_direct) std::cout << "make_acc_direct=" << fmt_g(*m.make_acc_direct) << "\n";
    std::cout << "make_acc_derived=" << fmt_g(m.make_acc_derived) << "\n";
    for (const auto& [k, acc] : m.top_k_acc)
        std::cout << "top" << k << "_acc=" << fmt_g(acc) << "\n";
    if (m.consistency_rate) std::cout << "consistency=" << fmt_g(*m.consistency_rate) << "\n";
}

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::filesystem::path& out_dir) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    std::filesystem::create_directories(out_dir);

    Dataset data = cfg.dataset.load();
    DatasetSplit split = split_dataset(data.samples, cfg.dataset.ratios, cfg.dataset.split_seed);
    MtlNetwork net(cfg.network_config(), data.taxonomy, cfg.seed);
    TrainedRun run = train(net, split, cfg.train_config(),
                           [](const EpochRecord& r, MtlNetwork&) { print_epoch(r); });

    const std::vector<Sample>& eval_set =
        !split.test.empty() ? split.test : (!split.val.empty() ? split.val : split.train);
    MetricsReport metrics = evaluate(net, eval_set);
    std::cout << "best_epoch=" << run.best_epoch << "\n";
    print_metrics(metrics);

    save_checkpoint(net, out_dir / (cfg.run_id() + ".htmt"));
    std::ofstream epochs_csv(out_dir / "epochs.csv");
    epochs_csv << "epoch,train_loss,val_model_acc,val_make_acc,lr\n";
    for (const EpochRecord& r : run.epochs)
        epochs_csv << r.epoch << ',' << fmt_g(r.train_loss) << ',' << fmt_g(r.val_model_acc) << ','
                   << fmt_g(r.val_make_acc) << ',' << fmt_g(r.lr) << "\n";

    RunResult result;
    result.run_id = cfg.run_id();
    result.config = cfg;
    result.test_metrics = metrics;
    result.params = net.parameter_count();
    result.flops = net.flop_count();
    write_results_csv({result}, out_dir / "metrics.csv");
    std::cout << "checkpoint=" << (out_dir / (cfg.run_id() + ".htmt")).string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, std::int64_t seed_override, std::size_t jobs,
              const std::filesystem::path& out_dir) {
    SweepSpec spec = load_sweep_spec(config_path);
    if (seed_override >= 0) spec.seeds = {static_cast<std::uint64_t>(seed_override)};
    SweepOutcome outcome = run_sweep(spec, out_dir, jobs);
    std::cout << "points=" << outcome.results.size() << " failed=" << outcome.failed
              << " results=" << outcome.results_csv.string() << "\n";
    for (const RunResult& r : outcome.results)
        if (r.failed()) std::cerr << "failed: " << r.run_id << ": " << r.error << "\n";
    return outcome.failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::filesystem::path& out_dir) {
    Dataset data = load_manifest(manifest_path);
    MtlNetwork net = load_checkpoint(checkpoint_path, data.taxonomy);
    MetricsReport m = evaluate(net, data.samples);
    print_metrics(m);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir / "eval_metrics.csv");
        out << "n_samples,model_acc,make_acc_direct,make_acc_derived,top1,top3,top5,consistency\n";
        out << m.n_samples << ',' << fmt_g(m.model_acc) << ','
            << (m.make_acc_direct ? fmt_g(*m.make_acc_direct) : "") << ','
            << fmt_g(m.make_acc_derived) << ',' << fmt_g(m.top_k_acc.at(1)) << ','
            << fmt_g(m.top_k_acc.at(3)) << ',' << fmt_g(m.top_k_acc.at(5)) << ','
            << (m.consistency_rate ? fmt_g(*m.consistency_rate) : "") << "\n";
    }
    return 0;
}

int cmd_accounting(std::size_t d, std::size_t k, std::size_t m, std::int64_t expect_parallel,
                   std::int64_t expect_cascaded) {
    std::cout << "head accounting for d=" << d << " K=" << k << " M=" << m << "\n";
    const std::size_t pp = parallel_param_delta(d, k);
    const std::size_t cp = cascaded_extra_param_delta(m, k);
    const std::size_t pf = parallel_flop_delta(d, k);
    const std::size_t cf = cascaded_extra_flop_delta(m, k);
    std::cout << "params_parallel_delta=" << pp << "  (K*(d+1))\n";
    std::cout << "params_cascaded_extra_delta=" << cp << "  (M*K)\n";
    std::cout << "flops_parallel_delta=" << pf << "  (K*d)\n";
    std::cout << "flops_cascaded_extra_delta=" << cf << "  (M*K)\n";
    bool ok = true;
    if (expect_parallel >= 0) {
        const bool pass = pp == static_cast<std::size_t>(expect_parallel);
        ok = ok && pass;
        std::cout << "expect_parallel=" << expect_parallel << " " << (pass ? "PASS" : "FAIL")
                  << "\n";
    }
    if (expect_cascaded >= 0) {
        const bool pass = cp == static_cast<std::size_t>(expect_cascaded);
        ok = ok && pass;
        std::cout << "expect_cascaded=" << expect_cascaded << " " << (pass ? "PASS" : "FAIL")
                  << "\n";
    }
    return ok ? 0 : 1;
}

int cmd_plot(const std::string& results_path, const std::filesystem::path& out_dir) {
    for (const std::filesystem::path& p : emit_plots(results_path, out_dir))
        std::cout << "wrote " << p.string() << "\n";
    return 0;
}

int cmd_synth(const CLI::App* cmd, const std::string& config_path, const SyntheticSpec& flags,
              const std::filesystem::path& out_dir) {
    SyntheticSpec spec;
    if (!config_path.empty()) spec = load_experiment_config(config_path).dataset.synthetic;
    // explicitly passed flags override config values field by field
    if (cmd->count("--makes")) spec.makes = flags.makes;
    if (cmd->count("--models-per-make")) spec.models_per_make = flags.models_per_make;
    if (cmd->count("--dim")) spec.dim = flags.dim;
    if (cmd->count("--n-per-model")) spec.n_per_model = flags.n_per_model;
    if (cmd->count("--make-sep")) spec.make_separation = flags.make_separation;
    if (cmd->count("--model-sep")) spec.model_separation = flags.model_separation;
    if (cmd->count("--noise")) spec.noise_sigma = flags.noise_sigma;
    if (cmd->count("--seed")) spec.seed = flags.seed;
    Dataset data = generate_synthetic(spec);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path manifest = out_dir / "synthetic.csv";
    write_manifest(data, manifest);
    std::cout << "wrote " << manifest.string() << " (" << data.samples.size() << " samples, "
              << data.taxonomy.make_count() << " makes, " << data.taxonomy.model_count()
              << " models)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical multi-task learning engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string manifest_path;
    std::string results_path;
    std::filesystem::path out_dir = default_out_root();
    std::int64_t seed_override = -1;
    std::size_t jobs = 1;

    auto* train_cmd = app.add_subcommand("train", "train a single configuration");
    train_cmd->add_option("--config", config_path, "experiment config file")->required();
    train_cmd->add_option("--seed", seed_override, "override the training seed");
    train_cmd->add_option("--out", out_dir, "output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "run a sweep file");
    sweep_cmd->add_option("--config", config_path, "sweep config file")->required();
    sweep_cmd->add_option("--seed", seed_override, "replace the seed axis with one seed");
    sweep_cmd->add_option("--jobs", jobs, "concurrent runs");
    sweep_cmd->add_option("--out", out_dir, "output directory");

    std::filesystem::path eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    eval_cmd->add_option("--out", eval_out, "optional metrics output directory");

    auto* plot_cmd = app.add_subcommand("plot", "emit SVG charts from a results CSV");
    plot_cmd->add_option("results", results_path, "results CSV")->required();
    plot_cmd->add_option("--out", out_dir, "output directory");

    std::size_t acc_d = 0, acc_k = 0, acc_m = 0;
    std::int64_t expect_parallel = -1, expect_cascaded = -1;
    auto* acc_cmd = app.add_subcommand("accounting", "parameter/FLOP deltas of the task heads");
    acc_cmd->add_option("d", acc_d, "feature width")->required();
    acc_cmd->add_option("K", acc_k, "number of makes")->required();
    acc_cmd->add_option("M", acc_m, "number of models")->required();
    acc_cmd->add_option("--expect-parallel", expect_parallel, "expected parallel parameter delta");
    acc_cmd->add_option("--expect-cascaded", expect_cascaded, "expected cascaded extra delta");

    SyntheticSpec synth_flags;
    auto* synth_cmd = app.add_subcommand("synth", "emit a synthetic dataset manifest");
    synth_cmd->add_option("--config", config_path, "config with a [dataset] section");
    synth_cmd->add_option("--makes", synth_flags.makes, "coarse classes");
    synth_cmd->add_option("--models-per-make", synth_flags.models_per_make, "fine per coarse");
    synth_cmd->add_option("--dim", synth_flags.dim, "feature dimension");
    synth_cmd->add_option("--n-per-model", synth_flags.n_per_model, "samples per model");
    synth_cmd->add_option("--make-sep", synth_flags.make_separation, "make margin, noise units");
    synth_cmd->add_option("--model-sep", synth_flags.model_separation, "model margin, noise units");
    synth_cmd->add_option("--noise", synth_flags.noise_sigma, "noise sigma");
    synth_cmd->add_option("--seed", synth_flags.seed, "generator seed");
    synth_cmd->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, seed_override, out_dir);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path, seed_override, jobs, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint_path, manifest_path, eval_out);
        if (plot_cmd->parsed()) return cmd_plot(results_path, out_dir);
        if (acc_cmd->parsed())
            return cmd_accounting(acc_d, acc_k, acc_m, expect_parallel, expect_cascaded);
        if (synth_cmd->parsed()) return cmd_synth(synth_cmd, config_path, synth_flags, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
