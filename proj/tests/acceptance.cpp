// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance            run AC-1 .. AC-9
//   acceptance AC-2 AC-7  run a subset

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "cli_runner.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rfmsm/eval.hpp"
#include "rfmsm/fewshot.hpp"
#include "rfmsm/losses.hpp"
#include "rfmsm/masking.hpp"
#include "rfmsm/siggen.hpp"
#include "rfmsm/train.hpp"

using namespace rfmsm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& msg) {
    std::fprintf(stderr, "  .. %s\n", msg.c_str());
    std::fflush(stderr);
}

// ---------------------------------------------------------------- AC-1

Outcome masking_statistics() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t len = 512;
    const IQFrame frame = [&] {
        IQFrame f = IQFrame::zeros(len);
        for (std::size_t n = 0; n < len; ++n) f.i[n] = f.q[n] = 1.0;
        return f;
    }();
    bool ok = true;
    std::string detail;
    for (double r : {0.1, 0.5, 0.7, 0.9}) {
        double sum = 0.0;
        for (std::uint64_t t = 0; t < 10000; ++t) {
            sum += masked_fraction(apply_mask(frame, {MaskStrategy::A, r, derive_seed(1, t)}, {}));
        }
        const double mean = sum / 10000.0;
        ok &= std::abs(mean - r) <= 0.01;
        detail += format("A@%.1f mean %.4f; ", r, mean);
    }
    std::size_t exact = 0, trials = 0;
    for (auto s : {MaskStrategy::B, MaskStrategy::D}) {
        for (double r : {0.1, 0.5, 0.7, 0.9}) {
            const auto want = static_cast<std::size_t>(std::lround(r * static_cast<double>(len)));
            for (std::uint64_t t = 0; t < 1000; ++t) {
                const auto m = apply_mask(frame, {s, r, derive_seed(2, t)}, {0.0, 1.0}).mask;
                const auto first = std::find(m.begin(), m.end(), true);
                const auto count = static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
                const bool contiguous =
                    count == 0 || std::all_of(first, first + static_cast<std::ptrdiff_t>(count), [](bool b) { return b; });
                exact += count == want && contiguous;
                ++trials;
            }
        }
    }
    const double secs = seconds_since(t0);
    ok &= exact == trials && secs < 10.0;
    detail += format("B/D exact contiguous %zu/%zu; %.1f s", exact, trials, secs);
    return {ok, detail};
}

// ---------------------------------------------------------------- AC-2

Outcome gradient_engine() {
    const auto t0 = std::chrono::steady_clock::now();
    using support::check_module;
    using support::random_tensor;
    std::vector<support::GradError> all;
    auto add = [&](const std::string& prefix, std::vector<support::GradError> errs) {
        for (auto& e : errs) {
            e.name = prefix + ":" + e.name;
            all.push_back(std::move(e));
        }
    };
    auto jitter = [](const std::vector<ParamTensor<double>*>& ps, std::uint64_t seed) {
        Rng rng(seed);
        for (auto* p : ps)
            if (p->is_bias)
                for (auto& v : p->value) v = 0.1 * rng.normal();
    };

    {
        nn::Conv1d<double> conv("conv", 2, 3, 3, 2, 2, 2, 2);
        nn::ReLU<double> relu;
        nn::Upsample2<double> up;
        nn::AvgPool<double> pool(4);
        nn::ResidualBlock<double> res("res", 2, 4, 3, 2);
        nn::GatedResidualBlock<double> gated("gated", 3, 2, 2);
        nn::Linear<double> lin("linear", 2 * 32, 5);
        add("conv", check_module(conv, random_tensor(2, 2, 32, 1), 11));
        add("relu", check_module(relu, random_tensor(2, 2, 32, 2), 12));
        add("upsample", check_module(up, random_tensor(2, 2, 32, 3), 13));
        add("avgpool", check_module(pool, random_tensor(2, 2, 32, 4), 14));
        add("residual", check_module(res, random_tensor(2, 2, 32, 5), 15));
        add("gated", check_module(gated, random_tensor(2, 3, 32, 6), 16));
        add("flatten+affine", check_module(lin, random_tensor(2, 2, 32, 7), 17));
    }
    // 2-block autoencoder under both reconstruction losses
    for (auto kind : {ReconstructionLoss::l1, ReconstructionLoss::l2}) {
        Autoencoder<double> ae(support::tiny_resnet());
        ae.init(3);
        jitter(ae.parameters(), 3);
        const auto target = random_tensor(2, 2, 32, 8);
        Tensor<double> input = target;
        for (std::size_t n = 0; n < 32; n += 3) input(0, 0, n) = input(1, 1, n) = 0.0;
        ae.zero_grad();
        ae.backward(reconstruction_loss(ae.forward(input), target, kind).grad);
        add("autoencoder/" + to_string(kind),
            support::check_params(ae.parameters(),
                                  [&] { return reconstruction_loss(ae.forward(input), target, kind).value; }));
    }
    for (const auto& arch : {support::tiny_resnet(), support::tiny_dilated()}) {
        Classifier<double> clf(arch, 32, 5);
        clf.encoder.init(4);
        clf.probe.init(5);
        jitter(clf.parameters(), 5);
        const auto x = random_tensor(2, 2, 32, 9);
        const std::vector<int> labels{1, 4};
        clf.zero_grad();
        clf.backward(cross_entropy(clf.forward(x), labels).grad);
        add("classifier/" + to_string(arch.kind),
            support::check_params(clf.parameters(), [&] { return cross_entropy(clf.forward(x), labels).value; }));
    }
    const auto worst = *std::max_element(all.begin(), all.end(),
                                         [](const auto& a, const auto& b) { return a.rel_err < b.rel_err; });
    const double secs = seconds_since(t0);
    return {worst.rel_err < 1e-3 && secs < 60.0,
            format("%zu tensors checked, worst rel err %.2e (%s); %.1f s", all.size(), worst.rel_err,
                   worst.name.c_str(), secs)};
}

// ---------------------------------------------------------------- AC-3

Outcome fewshot_sampler() {
    const auto corpus = generate_corpus(10, snr_range(-20, 20), 21, support::short_frames(64));
    bool ok = true;
    std::string detail;
    for (std::size_t n : {1u, 5u, 10u}) {
        const auto shots = sample_nshot(corpus, {n, 7});
        std::map<std::pair<int, int>, std::size_t> hist;
        for (const auto& l : shots.labels) ++hist[{l.class_id, l.snr_db}];
        bool uniform = hist.size() == 205;
        for (const auto& [cell, c] : hist) uniform &= c == n;
        ok &= shots.size() == 205 * n && uniform;
        detail += format("n=%zu: %zu frames, %zu cells%s; ", n, shots.size(), hist.size(), uniform ? " uniform" : "");
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- AC-4

Outcome awgn_calibration() {
    const GeneratorConfig cfg;
    bool ok = true;
    std::string detail;
    for (int target : {-20, 0, 20}) {
        double sig = 0.0, noise = 0.0;
        for (std::uint64_t k = 0; k < 1000; ++k) {
            Rng rng(derive_seed(40, k));
            const WaveformSpec spec = sample_waveform(static_cast<WaveformClass>(k % 5), cfg, rng);
            const IQFrame clean = generate_clean(spec, cfg.frame_len, cfg.t_res_us);
            const IQFrame noisy = add_awgn(clean, target, derive_seed(41, k));
            sig += active_signal_power(clean);
            double p = 0.0;
            for (std::size_t n = 0; n < clean.length(); ++n) {
                const double di = noisy.i[n] - clean.i[n], dq = noisy.q[n] - clean.q[n];
                p += di * di + dq * dq;
            }
            noise += p / static_cast<double>(clean.length());
        }
        const double measured = 10.0 * std::log10(sig / noise);
        ok &= std::abs(measured - target) <= 0.5;
        detail += format("%+d dB -> %+.3f dB; ", target, measured);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- AC-5 / AC-6 / AC-9

/// Desk-scale network: the default ResNet1D layout at half width.
ArchitectureDescriptor desk_arch() {
    ArchitectureDescriptor a = ArchitectureDescriptor::resnet1d_default();
    a.stem_channels = 16;
    a.stage_channels = {16, 32, 64};
    return a;
}

PretrainConfig desk_pretrain() {
    PretrainConfig c;  // strategy A, ratio 0.7, l1, lr 1e-3, batch 128, patience 3
    c.arch = desk_arch();
    c.max_epochs = 5;
    c.seed = 1;
    return c;
}

FinetuneConfig desk_finetune(std::uint64_t seed) {
    FinetuneConfig c;  // lr 1e-4, batch 8, 100 epochs, encoder frozen for 10
    c.seed = seed;
    return c;
}

struct TransferRun {
    std::vector<MetricsReport> ssl, baseline;
    double seconds = 0.0;
};

TransferRun transfer_experiment(const SignalDataset& corpus, const SignalDataset& pool, const SignalDataset& test,
                                std::size_t seeds, bool with_baseline) {
    const auto t0 = std::chrono::steady_clock::now();
    progress("pre-training on " + std::to_string(corpus.size()) + " frames of length " +
             std::to_string(corpus.meta.frame_len));
    const auto pre = pretrain(corpus, desk_pretrain(), [](const nlohmann::json& j) {
        if (j["split"] == "val") progress(format("epoch %d val loss %.4f", j["epoch"].get<int>(), j["loss"].get<double>()));
    });
    TransferRun run;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        const auto shots = sample_nshot(pool, {1, s});
        run.ssl.push_back(evaluate(finetune(pre.checkpoint, shots, desk_finetune(s)), test));
        std::string line = format("seed %llu: ssl %.4f", static_cast<unsigned long long>(s), run.ssl.back().accuracy);
        if (with_baseline) {
            run.baseline.push_back(evaluate(train_baseline(shots, desk_finetune(s), desk_arch()), test));
            line += format(", baseline %.4f", run.baseline.back().accuracy);
        }
        progress(line);
    }
    run.seconds = seconds_since(t0);
    return run;
}

const TransferRun& in_domain_run() {
    static const TransferRun run = [] {
        const auto grid = snr_range(-20, 20);
        const auto corpus = generate_corpus(100, grid, 11);  // 20,500 frames
        const auto pool = generate_corpus(2, grid, 12);
        const auto test = generate_corpus(50, grid, 13);  // 10,250 frames
        return transfer_experiment(corpus, pool, test, 5, true);
    }();
    return run;
}

Outcome ssl_benefit() {
    const auto& run = in_domain_run();
    double ssl = 0.0, base = 0.0;
    int wins = 0;
    for (std::size_t k = 0; k < run.ssl.size(); ++k) {
        ssl += run.ssl[k].accuracy;
        base += run.baseline[k].accuracy;
        wins += run.ssl[k].accuracy > run.baseline[k].accuracy;
    }
    ssl /= static_cast<double>(run.ssl.size());
    base /= static_cast<double>(run.ssl.size());
    return {ssl - base > 0.0 && wins >= 4 && run.seconds < 1800.0,
            format("mean accuracy ssl %.4f vs baseline %.4f (diff %+.4f), ssl wins %d/5; %.0f s", ssl, base,
                   ssl - base, wins, run.seconds)};
}

Outcome trend_of(const std::vector<MetricsReport>& reports) {
    double lo = 1.0, sum = 0.0;
    for (const auto& r : reports) {
        const double rho = snr_trend(r);
        lo = std::min(lo, rho);
        sum += rho;
    }
    return {lo > 0.8, format("Spearman(SNR, accuracy) min %.3f, mean %.3f over %zu fine-tuned models", lo,
                             sum / static_cast<double>(reports.size()), reports.size())};
}

Outcome snr_trend_criterion() { return trend_of(in_domain_run().ssl); }

Outcome cross_length() {
    const auto grid = snr_range(-20, 20);
    GeneratorConfig long_frames;
    long_frames.frame_len = 1024;
    const auto corpus = generate_corpus(100, grid, 31, long_frames);  // 20,500 frames of length 1024
    const auto pool = generate_corpus(2, grid, 32);
    const auto test = generate_corpus(50, grid, 33);
    const auto run = transfer_experiment(corpus, pool, test, 5, false);
    Outcome o = trend_of(run.ssl);
    double acc = 0.0;
    for (const auto& r : run.ssl) acc += r.accuracy;
    o.detail = format("L=1024 -> L=512, mean accuracy %.4f; ", acc / static_cast<double>(run.ssl.size())) + o.detail +
               format("; %.0f s", run.seconds);
    return o;
}

// ---------------------------------------------------------------- AC-7

Outcome metric_oracles() {
    Rng rng(70);
    double worst_metric = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(9);
        Confusion c(n, std::vector<std::uint64_t>(n));
        for (auto& row : c)
            for (auto& v : row) v = rng.below(5) == 0 ? 0 : rng.below(200);
        worst_metric = std::max({worst_metric, std::abs(accuracy(c) - support::brute_accuracy(c)),
                                 std::abs(macro_f1(c) - support::brute_macro_f1(c))});
    }
    double worst_pca = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r(derive_seed(71, seed));
        Eigen::MatrixXd x(200, 64);
        for (Eigen::Index j = 0; j < 64; ++j)
            for (Eigen::Index i = 0; i < 200; ++i) x(i, j) = r.normal() * (1.0 + 0.05 * static_cast<double>(j));
        const auto p = pca(x, 64);
        const auto oracle = support::svd_covariance_spectrum(x);
        const double total = oracle.sum();
        for (Eigen::Index k = 0; k < 64; ++k) {
            const double want = oracle(k) / total;
            worst_pca = std::max(worst_pca, std::abs(p.explained_ratio(k) - want) / want);
        }
    }
    return {worst_metric <= 1e-12 && worst_pca <= 1e-6,
            format("metrics max abs err %.1e over 1000 confusions; PCA explained-variance max rel err %.1e", worst_metric,
                   worst_pca)};
}

// ---------------------------------------------------------------- AC-8

Outcome end_to_end_determinism() {
    support::TempDir dir;
    support::write_json(dir / "c.json", support::tiny_pipeline_config());
    const std::string cfg = "--deterministic --config " + support::quoted(dir / "c.json");
    const std::vector<std::string> artifacts{"corpus.rfm", "test.rfm", "pool.rfm",    "ae.rfckpt",
                                             "clf.rfckpt", "clf.shots.rfm", "metrics.json"};
    for (const char* run : {"a", "b"}) {
        const auto d = dir / run;
        std::filesystem::create_directories(d);
        auto q = [&](const std::string& name) { return support::quoted(d / name); };
        const std::vector<std::string> steps{
            "generate " + cfg + " --out " + q("corpus.rfm"),
            "generate " + cfg + " --set test --out " + q("test.rfm"),
            "generate " + cfg + " --seed-override 99 --set test --out " + q("pool.rfm"),
            "pretrain " + cfg + " --corpus " + q("corpus.rfm") + " --out " + q("ae.rfckpt"),
            "finetune " + cfg + " --checkpoint " + q("ae.rfckpt") + " --data " + q("pool.rfm") + " --out " +
                q("clf.rfckpt"),
            "evaluate " + cfg + " --checkpoint " + q("clf.rfckpt") + " --data " + q("test.rfm") + " --out " +
                q("metrics.json")};
        for (const auto& step : steps) {
            const auto r = support::run_cli(step);
            if (r.exit_code != 0) return {false, format("run %s: '%s' exited %d", run, step.c_str(), r.exit_code)};
        }
    }
    std::size_t same = 0;
    std::string differing;
    for (const auto& name : artifacts) {
        const std::string a = support::read_file(dir / "a" / name), b = support::read_file(dir / "b" / name);
        if (!a.empty() && a == b) {
            ++same;
        } else {
            differing += " " + name;
        }
    }
    const auto report = nlohmann::json::parse(support::read_file(dir / "a" / "metrics.json"));
    return {same == artifacts.size() && report.contains("accuracy"),
            format("%zu/%zu artifacts byte-identical across two runs", same, artifacts.size()) +
                (differing.empty() ? "" : "; differ:" + differing)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria{
        {"AC-1", {"masking statistics", masking_statistics}},
        {"AC-2", {"gradient engine", gradient_engine}},
        {"AC-3", {"few-shot sampler", fewshot_sampler}},
        {"AC-4", {"AWGN calibration", awgn_calibration}},
        {"AC-5", {"directional SSL benefit", ssl_benefit}},
        {"AC-6", {"SNR trend", snr_trend_criterion}},
        {"AC-7", {"metric oracles", metric_oracles}},
        {"AC-8", {"end-to-end determinism", end_to_end_determinism}},
        {"AC-9", {"cross-length adaptation", cross_length}},
    };
    std::vector<std::string> wanted(argv + 1, argv + argc);
    int failures = 0, ran = 0;
    for (const auto& [id, entry] : criteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
        ++ran;
        Outcome o;
        try {
            o = entry.second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %s  %s: %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", entry.first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 && ran > 0 ? 0 : 1;
}
