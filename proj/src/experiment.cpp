#include "hiertask/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "hiertask/checkpoint.hpp"

namespace hiertask {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint_path) {
    RunResult result;
    result.config = cfg;
    result.run_id = cfg.run_id();
    const auto start = std::chrono::steady_clock::now();
    try {
        cfg.validate();
        Dataset data = cfg.dataset.load();
        if (numel(cfg.encoder.input_shape) != data.feature_dim)
            throw ConfigError("encoder input shape " + shape_str(cfg.encoder.input_shape) +
                              " does not cover " + std::to_string(data.feature_dim) +
                              "-dimensional features");
        DatasetSplit split = split_dataset(data.samples, cfg.dataset.ratios, cfg.dataset.split_seed);
        MtlNetwork net(cfg.network_config(), data.taxonomy, cfg.seed);
        result.params = net.parameter_count();
        result.flops = net.flop_count();
        result.training = train(net, split, cfg.train_config());
        // degenerate splits fall back to whatever evaluation data exists
        const std::vector<Sample>& eval_set =
            !split.test.empty() ? split.test : (!split.val.empty() ? split.val : split.train);
        result.test_metrics = evaluate(net, eval_set);
        if (!checkpoint_path.empty()) save_checkpoint(net, checkpoint_path);
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    result.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return result;
}

const char* const kResultsCsvHeader =
    "run_id,encoder,mode,lambda1,lambda2,dropout,seed,model_acc,make_acc_direct,"
    "make_acc_derived,top3,top5,consistency,params,flops,epochs,wall_ms";

std::string results_csv_row(const RunResult& r) {
    const ExperimentConfig& c = r.config;
    std::ostringstream os;
    os << r.run_id << ',' << to_string(c.encoder.family) << ',' << to_string(c.mode) << ','
       << fmt_g(c.weights.lambda1) << ',' << fmt_g(c.weights.lambda2) << ',' << fmt_g(c.dropout)
       << ',' << c.seed << ',';
    const MetricsReport& m = r.test_metrics;
    os << fmt_g(m.model_acc) << ',';
    if (m.make_acc_direct) os << fmt_g(*m.make_acc_direct);
    os << ',' << fmt_g(m.make_acc_derived) << ',';
    auto top = [&m](std::size_t k) { return m.top_k_acc.count(k) ? m.top_k_acc.at(k) : 0.0; };
    os << fmt_g(top(3)) << ',' << fmt_g(top(5)) << ',';
    if (m.consistency_rate) os << fmt_g(*m.consistency_rate);
    os << ',' << r.params << ',' << r.flops << ',' << c.epochs << ',' << r.wall_ms;
    return os.str();
}

void write_results_csv(const std::vector<RunResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write results " + path.string());
    out << kResultsCsvHeader << "\n";
    for (const RunResult& r : results)
        if (!r.failed()) out << results_csv_row(r) << "\n";
    if (!out) throw IoError("failed writing results " + path.string());
}

void write_summary_table(const std::vector<RunResult>& results, const std::filesystem::path& path) {
    // group (encoder, mode, weights, dropout); average metrics over seeds
    struct Group {
        double model_acc = 0.0;
        double make_acc = 0.0;
        std::size_t runs = 0;
    };
    std::map<std::string, Group> groups;
    for (const RunResult& r : results) {
        if (r.failed()) continue;
        const ExperimentConfig& c = r.config;
        std::ostringstream key;
        key << std::left << std::setw(16) << to_string(c.encoder.family) << std::setw(13)
            << to_string(c.mode) << std::setw(13)
            << ("[" + fmt_g(c.weights.lambda1) + ", " + fmt_g(c.weights.lambda2) + "]")
            << std::setw(9) << fmt_g(c.dropout);
        Group& g = groups[key.str()];
        g.model_acc += r.test_metrics.model_acc;
        g.make_acc += r.test_metrics.make_acc_direct ? *r.test_metrics.make_acc_direct
                                                     : r.test_metrics.make_acc_derived;
        g.runs += 1;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write summary " + path.string());
    out << std::left << std::setw(16) << "encoder" << std::setw(13) << "mode" << std::setw(13)
        << "weights" << std::setw(9) << "dropout" << std::setw(12) << "model_acc" << std::setw(12)
        << "make_acc" << "runs\n";
    for (const auto& [key, g] : groups) {
        const double n = static_cast<double>(g.runs);
        char model_buf[16], make_buf[16];
        std::snprintf(model_buf, sizeof(model_buf), "%.4f", g.model_acc / n);
        std::snprintf(make_buf, sizeof(make_buf), "%.4f", g.make_acc / n);
        out << key << std::setw(12) << model_buf << std::setw(12) << make_buf << g.runs << "\n";
    }
    if (!out) throw IoError("failed writing summary " + path.string());
}

SweepOutcome run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir,
                       std::size_t jobs) {
    const std::vector<ExperimentConfig> points = spec.expand();
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path checkpoint_dir = out_dir / "checkpoints";
    std::filesystem::create_directories(checkpoint_dir);

    std::vector<RunResult> results(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= points.size()) break;
            const std::filesystem::path ckpt = checkpoint_dir / (points[i].run_id() + ".htmt");
            results[i] = run_experiment(points[i], ckpt);
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, points.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    std::sort(results.begin(), results.end(),
              [](const RunResult& a, const RunResult& b) { return a.run_id < b.run_id; });

    SweepOutcome outcome;
    outcome.results = std::move(results);
    for (const RunResult& r : outcome.results)
        if (r.failed()) ++outcome.failed;

    outcome.results_csv = out_dir / "results.csv";
    write_results_csv(outcome.results, outcome.results_csv);
    write_summary_table(outcome.results, out_dir / "summary.txt");
    if (outcome.failed > 0) {
        std::ofstream fail(out_dir / "failures.csv");
        fail << "run_id,error\n";
        for (const RunResult& r : outcome.results)
            if (r.failed()) fail << r.run_id << ",\"" << r.error << "\"\n";
    }
    return outcome;
}

}  // namespace hiertask
