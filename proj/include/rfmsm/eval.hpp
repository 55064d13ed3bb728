#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rfmsm/binary_io.hpp"
#include "rfmsm/checkpoint.hpp"
#include "rfmsm/fewshot.hpp"
#include "rfmsm/iqcore.hpp"
#include "rfmsm/models.hpp"
#include "rfmsm/train.hpp"

namespace rfmsm {

/// counts[true_class][predicted_class]
using Confusion = std::vector<std::vector<std::uint64_t>>;

inline Confusion make_confusion(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t n_cls) {
    require(truth.size() == pred.size(), ErrorCode::shape_mismatch, "truth and prediction counts differ");
    Confusion c(n_cls, std::vector<std::uint64_t>(n_cls, 0));
    for (std::size_t k = 0; k < truth.size(); ++k) {
        require(truth[k] >= 0 && static_cast<std::size_t>(truth[k]) < n_cls && pred[k] >= 0 &&
                    static_cast<std::size_t>(pred[k]) < n_cls,
                ErrorCode::invalid_argument, "class index out of range");
        ++c[static_cast<std::size_t>(truth[k])][static_cast<std::size_t>(pred[k])];
    }
    return c;
}

inline void require_square(const Confusion& c) {
    for (const auto& row : c) require(row.size() == c.size(), ErrorCode::shape_mismatch, "confusion must be square");
}

inline double accuracy(const Confusion& c) {
    require_square(c);
    std::uint64_t diag = 0, total = 0;
    for (std::size_t r = 0; r < c.size(); ++r) {
        diag += c[r][r];
        total += std::accumulate(c[r].begin(), c[r].end(), std::uint64_t{0});
    }
    return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
}

/// F1 per class; a class whose precision and recall are both undefined or
/// zero scores 0.
inline std::vector<double> per_class_f1(const Confusion& c) {
    require_square(c);
    const std::size_t n = c.size();
    std::vector<double> f1(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t tp = c[k][k], support = 0, predicted = 0;
        for (std::size_t j = 0; j < n; ++j) {
            support += c[k][j];
            predicted += c[j][k];
        }
        // 2PR/(P+R) == 2TP/(support+predicted) whenever it is defined
        if (tp > 0) f1[k] = 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted);
    }
    return f1;
}

inline double macro_f1(const Confusion& c) {
    const auto f1 = per_class_f1(c);
    if (f1.empty()) return 0.0;
    return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
}

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::map<int, double> per_snr_accuracy;
    std::map<int, std::uint64_t> per_snr_support;
    Confusion confusion;
    nlohmann::json provenance = nlohmann::json::object();
};

inline MetricsReport build_report(const std::vector<int>& truth, const std::vector<int>& pred,
                                  const std::vector<int>& snr_db, std::size_t n_cls) {
    require(snr_db.size() == truth.size(), ErrorCode::shape_mismatch, "one SNR label per frame required");
    MetricsReport r;
    r.confusion = make_confusion(truth, pred, n_cls);
    r.accuracy = accuracy(r.confusion);
    r.per_class_f1 = per_class_f1(r.confusion);
    r.macro_f1 = macro_f1(r.confusion);
    std::map<int, std::uint64_t> correct;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        ++r.per_snr_support[snr_db[k]];
        correct[snr_db[k]] += truth[k] == pred[k];
    }
    for (const auto& [snr, n] : r.per_snr_support) {
        r.per_snr_accuracy[snr] = static_cast<double>(correct[snr]) / static_cast<double>(n);
    }
    return r;
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    auto snr = nlohmann::json::array();
    for (const auto& [s, acc] : r.per_snr_accuracy) {
        snr.push_back({{"snr_db", s}, {"accuracy", acc}, {"support", r.per_snr_support.at(s)}});
    }
    j = {{"accuracy", r.accuracy},
         {"macro_f1", r.macro_f1},
         {"per_class_f1", r.per_class_f1},
         {"per_snr_accuracy", snr},
         {"confusion", r.confusion},
         {"provenance", r.provenance}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<Confusion>();
    r.per_snr_accuracy.clear();
    r.per_snr_support.clear();
    for (const auto& e : j.at("per_snr_accuracy")) {
        const int s = e.at("snr_db").get<int>();
        r.per_snr_accuracy[s] = e.at("accuracy").get<double>();
        r.per_snr_support[s] = e.at("support").get<std::uint64_t>();
    }
    r.provenance = j.value("provenance", nlohmann::json::object());
}

inline constexpr std::size_t kEvalBatch = 256;

/// Builds the classifier stored in a classifier checkpoint.
inline std::unique_ptr<Classifier<float>> load_classifier(const Checkpoint& ck) {
    require(ck.kind == CheckpointKind::classifier, ErrorCode::invalid_argument,
            "expected a classifier checkpoint (from finetune or baseline)");
    auto clf = std::make_unique<Classifier<float>>(ck.params.arch, ck.frame_len, ck.n_cls);
    clf->load(ck.params);
    return clf;
}

/// Predicted class per frame, evaluated in batches of `batch`.
inline std::vector<int> predict(const Checkpoint& ck, const SignalDataset& ds, std::size_t batch = kEvalBatch) {
    require(ck.stats.has_value(), ErrorCode::invalid_argument, "checkpoint carries no standardization stats");
    require(batch >= 1, ErrorCode::invalid_argument, "batch size must be >= 1");
    auto clf = load_classifier(ck);
    require(ds.meta.frame_len == ck.frame_len, ErrorCode::shape_mismatch,
            "dataset frame length " + std::to_string(ds.meta.frame_len) + " != classifier length " +
                std::to_string(ck.frame_len));
    const Tensor<float> data = to_tensor(ds, *ck.stats);
    std::vector<int> pred(ds.size());
    std::vector<std::size_t> pos;
    for (std::size_t lo = 0; lo < ds.size(); lo += batch) {
        const std::size_t hi = std::min(ds.size(), lo + batch);
        pos.resize(hi - lo);
        std::iota(pos.begin(), pos.end(), lo);
        Tensor<float> logits = clf->forward(gather(data, pos));
        for (std::size_t k = 0; k < pos.size(); ++k) pred[lo + k] = argmax_row(logits.frame(k), ck.n_cls);
    }
    return pred;
}

/// Classifies a labeled test set with the checkpoint's own standardization.
inline MetricsReport evaluate(const Checkpoint& ck, const SignalDataset& test, std::size_t batch = kEvalBatch) {
    require(test.has_labels(), ErrorCode::invalid_argument, "evaluation needs a labeled dataset");
    require(static_cast<std::size_t>(test.meta.n_cls) == ck.n_cls, ErrorCode::shape_mismatch,
            "test set has " + std::to_string(test.meta.n_cls) + " classes, classifier has " +
                std::to_string(ck.n_cls));
    const auto pred = predict(ck, test, batch);
    std::vector<int> truth(test.size()), snr(test.size());
    for (std::size_t k = 0; k < test.size(); ++k) {
        truth[k] = test.labels[k].class_id;
        snr[k] = test.labels[k].snr_db;
    }
    MetricsReport r = build_report(truth, pred, snr, ck.n_cls);
    r.provenance = {{"checkpoint_id", checkpoint_id(ck)},
                    {"config_hash", ck.provenance.value("config_hash", std::string{})},
                    {"seed", ck.provenance.value("seed", std::uint64_t{0})},
                    {"dataset", {{"name", test.meta.name}, {"num_frames", test.size()}}}};
    return r;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_argument,
            "spearman needs two equal-length series of at least 2 values");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        sxy += (rx[k] - mx) * (ry[k] - my);
        sxx += (rx[k] - mx) * (rx[k] - mx);
        syy += (ry[k] - my) * (ry[k] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman correlation between SNR level and accuracy at that level.
inline double snr_trend(const MetricsReport& r) {
    std::vector<double> snr, acc;
    for (const auto& [s, a] : r.per_snr_accuracy) {
        snr.push_back(s);
        acc.push_back(a);
    }
    return spearman(snr, acc);
}

// ---------------------------------------------------------------- sweeps

struct SweepCell {
    MaskStrategy strategy = MaskStrategy::A;
    double ratio = 0.0;
    std::vector<double> accuracies;  // one per seed
    std::vector<double> f1s;
    double accuracy = 0.0;  // seed mean
    double accuracy_std = 0.0;
    double f1 = 0.0;
    std::optional<std::string> error;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::optional<std::size_t> argmax;
};

/// Index of the best-accuracy cell; ties go to the lower ratio, then to the
/// earlier strategy (A < B < C < D). Failed cells are ignored.
inline std::optional<std::size_t> sweep_argmax(const std::vector<SweepCell>& cells) {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        if (c.error) continue;
        if (!best) {
            best = k;
            continue;
        }
        const auto& b = cells[*best];
        if (c.accuracy > b.accuracy ||
            (c.accuracy == b.accuracy &&
             (c.ratio < b.ratio || (c.ratio == b.ratio && static_cast<int>(c.strategy) < static_cast<int>(b.strategy))))) {
            best = k;
        }
    }
    return best;
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

struct SweepPlan {
    std::vector<MaskStrategy> strategies{MaskStrategy::A, MaskStrategy::B, MaskStrategy::C, MaskStrategy::D};
    std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::uint64_t> seeds{0};
    std::size_t jobs = 1;
};

/// Pre-trains, fine-tunes and evaluates every (strategy, ratio) cell for every
/// seed. Cells run on `jobs` worker threads with fully separate state; a
/// failing cell records its error and the rest continue.
inline SweepResult sweep(const SignalDataset& corpus, const SignalDataset& shots, const SignalDataset& test,
                         const PretrainConfig& pre, const FinetuneConfig& fine, const SweepPlan& plan) {
    require(!plan.strategies.empty() && !plan.ratios.empty(), ErrorCode::config, "sweep grid is empty");
    require(!plan.seeds.empty(), ErrorCode::config, "sweep needs at least one seed");
    SweepResult result;
    for (auto s : plan.strategies) {
        for (double r : plan.ratios) result.cells.push_back({s, r, {}, {}, 0.0, 0.0, 0.0, std::nullopt});
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < result.cells.size(); k = next++) {
            SweepCell& cell = result.cells[k];
            try {
                for (auto seed : plan.seeds) {
                    PretrainConfig p = pre;
                    p.strategy = cell.strategy;
                    p.mask_ratio = cell.ratio;
                    p.seed = seed;
                    FinetuneConfig f = fine;
                    f.seed = seed;
                    const auto ck = finetune(pretrain(corpus, p).checkpoint, shots, f);
                    const auto report = evaluate(ck, test);
                    cell.accuracies.push_back(report.accuracy);
                    cell.f1s.push_back(report.macro_f1);
                }
                std::tie(cell.accuracy, cell.accuracy_std) = mean_std(cell.accuracies);
                cell.f1 = mean_std(cell.f1s).first;
            } catch (const std::exception& e) {
                cell.error = std::string("cell (") + strategy_char(cell.strategy) + ", " + std::to_string(cell.ratio) +
                             "): " + e.what();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(plan.jobs, result.cells.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    result.argmax = sweep_argmax(result.cells);
    return result;
}

/// strategy,ratio,accuracy,f1,seed_mean,seed_std; failed cells have empty metrics.
inline std::string heatmap_csv(const SweepResult& r) {
    std::string out = "strategy,ratio,accuracy,f1,seed_mean,seed_std\n";
    char buf[160];
    for (const auto& c : r.cells) {
        if (c.error) {
            std::snprintf(buf, sizeof buf, "%c,%.2f,,,,\n", strategy_char(c.strategy), c.ratio);
        } else {
            std::snprintf(buf, sizeof buf, "%c,%.2f,%.6f,%.6f,%.6f,%.6f\n", strategy_char(c.strategy), c.ratio,
                          c.accuracy, c.f1, c.accuracy, c.accuracy_std);
        }
        out += buf;
    }
    return out;
}

inline nlohmann::json to_json(const SweepResult& r) {
    auto cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j{{"strategy", std::string(1, strategy_char(c.strategy))},
                         {"ratio", c.ratio},
                         {"accuracies", c.accuracies},
                         {"f1s", c.f1s},
                         {"accuracy", c.accuracy},
                         {"accuracy_std", c.accuracy_std},
                         {"f1", c.f1}};
        if (c.error) j["error"] = *c.error;
        cells.push_back(j);
    }
    nlohmann::json out{{"cells", cells}};
    if (r.argmax) {
        const auto& b = r.cells[*r.argmax];
        out["argmax"] = {{"strategy", std::string(1, strategy_char(b.strategy))}, {"ratio", b.ratio},
                         {"accuracy", b.accuracy}};
    } else {
        out["argmax"] = nullptr;
    }
    return out;
}

// ---------------------------------------------------------------- PCA

struct PcaResult {
    Eigen::VectorXd mean;            // D
    Eigen::MatrixXd components;      // D x k, orthonormal columns
    Eigen::VectorXd eigenvalues;     // k, covariance eigenvalues, descending
    Eigen::VectorXd explained_ratio; // eigenvalues / total variance
    double total_variance = 0.0;
};

namespace detail {

/// Top-k eigenpairs of a symmetric PSD matrix, descending.
inline void top_eigen(const Eigen::MatrixXd& s, std::size_t k, Eigen::MatrixXd& vecs, Eigen::VectorXd& vals) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    require(es.info() == Eigen::Success, ErrorCode::numerical_failure, "eigendecomposition failed");
    const auto kk = static_cast<Eigen::Index>(k);
    vals = es.eigenvalues().tail(kk).reverse().cwiseMax(0.0);
    vecs = es.eigenvectors().rightCols(kk).rowwise().reverse();
}

} // namespace detail

/// Largest dimension for which the covariance or Gram matrix is decomposed
/// directly; above it, a seeded block subspace iteration finds the leading
/// eigenpairs without forming the full matrix.
inline constexpr Eigen::Index kPcaDirectLimit = 2048;

/// Principal components of the rows of `x` (N samples x D features), using
/// population covariance. Explained ratios divide by the total variance, so
/// they are exact even when only k components are computed.
inline PcaResult pca(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed = 0) {
    const Eigen::Index n = x.rows(), d = x.cols();
    require(n >= 1 && d >= 1, ErrorCode::empty_corpus, "PCA needs a nonempty matrix");
    require(k >= 1 && static_cast<Eigen::Index>(k) <= std::min(n, d), ErrorCode::invalid_argument,
            "pca_dims " + std::to_string(k) + " exceeds min(samples, features) = " +
                std::to_string(std::min(n, d)));
    PcaResult r;
    r.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - r.mean.transpose();
    const double inv_n = 1.0 / static_cast<double>(n);
    r.total_variance = c.squaredNorm() * inv_n;
    const auto kk = static_cast<Eigen::Index>(k);

    if (d <= kPcaDirectLimit) {
        const Eigen::MatrixXd cov = (c.transpose() * c) * inv_n;
        detail::top_eigen(cov, k, r.components, r.eigenvalues);
    } else if (n <= kPcaDirectLimit) {
        // Gram route: C C^T u = n*lambda u, covariance eigenvector = C^T u / sqrt(n*lambda)
        const Eigen::MatrixXd gram = (c * c.transpose()) * inv_n;
        Eigen::MatrixXd u;
        detail::top_eigen(gram, k, u, r.eigenvalues);
        r.components = c.transpose() * u;
        for (Eigen::Index j = 0; j < kk; ++j) {
            const double norm = r.components.col(j).norm();
            if (norm > 0.0) r.components.col(j) /= norm;
        }
    } else {
        const Eigen::Index width = std::min<Eigen::Index>(std::min(n, d), kk + 16);
        Rng rng(seed);
        Eigen::MatrixXd q(d, width);
        for (Eigen::Index j = 0; j < width; ++j) {
            for (Eigen::Index i = 0; i < d; ++i) q(i, j) = rng.normal();
        }
        for (int it = 0; it < 40; ++it) {
            Eigen::MatrixXd z = c.transpose() * (c * q);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
            q = qr.householderQ() * Eigen::MatrixXd::Identity(d, width);
        }
        const Eigen::MatrixXd cq = c * q;
        const Eigen::MatrixXd small = (cq.transpose() * cq) * inv_n;
        Eigen::MatrixXd w;
        detail::top_eigen(small, k, w, r.eigenvalues);
        r.components = q * w;
    }
    r.explained_ratio = r.total_variance > 0.0 ? Eigen::VectorXd(r.eigenvalues / r.total_variance)
                                               : Eigen::VectorXd::Zero(kk);
    return r;
}

inline Eigen::MatrixXd pca_project(const PcaResult& p, const Eigen::MatrixXd& x) {
    return (x.rowwise() - p.mean.transpose()) * p.components;
}

// ---------------------------------------------------------------- embeddings

struct EmbeddingFile {
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
    std::vector<float> values;  // rows x dim
    std::vector<std::int16_t> labels;
    std::vector<std::int16_t> snr_db;
    std::vector<double> explained_ratio;

    friend bool operator==(const EmbeddingFile&, const EmbeddingFile&) = default;
};

/// Flattened encoder outputs (after the probe's pooling window), one row per frame.
inline Eigen::MatrixXd encode_flat(const Checkpoint& ck, const SignalDataset& ds, std::size_t batch = kEvalBatch) {
    require(ck.stats.has_value(), ErrorCode::invalid_argument, "checkpoint carries no standardization stats");
    const ArchitectureDescriptor& arch = ck.params.arch;
    arch.require_length(ds.meta.frame_len);
    Encoder<float> enc(arch);
    enc.load_from(ck.params);
    std::optional<nn::AvgPool<float>> pool;
    if (arch.probe_pool > 1) pool.emplace(arch.probe_pool);
    const Tensor<float> data = to_tensor(ds, *ck.stats);
    const std::size_t dim = arch.flatten_dim(ds.meta.frame_len);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(dim));
    std::vector<std::size_t> pos;
    for (std::size_t lo = 0; lo < ds.size(); lo += batch) {
        const std::size_t hi = std::min(ds.size(), lo + batch);
        pos.resize(hi - lo);
        std::iota(pos.begin(), pos.end(), lo);
        Tensor<float> e = enc.forward(gather(data, pos));
        if (pool) e = pool->forward(std::move(e));
        for (std::size_t b = 0; b < pos.size(); ++b) {
            const float* f = e.frame(b);
            for (std::size_t j = 0; j < dim; ++j) out(static_cast<Eigen::Index>(lo + b), static_cast<Eigen::Index>(j)) = f[j];
        }
    }
    return out;
}

inline EmbeddingFile export_embeddings(const Checkpoint& ck, const SignalDataset& ds, std::size_t pca_dims = 50) {
    require(!ds.empty(), ErrorCode::empty_corpus, "cannot embed an empty dataset");
    const std::size_t dim = ck.params.arch.flatten_dim(ds.meta.frame_len);
    require(pca_dims >= 1 && pca_dims <= std::min(ds.size(), dim), ErrorCode::invalid_argument,
            "pca_dims " + std::to_string(pca_dims) + " exceeds min(sample count " + std::to_string(ds.size()) +
                ", embedding dim " + std::to_string(dim) + ")");
    const Eigen::MatrixXd x = encode_flat(ck, ds);
    const PcaResult p = pca(x, pca_dims);
    const Eigen::MatrixXd y = pca_project(p, x);
    EmbeddingFile f;
    f.rows = static_cast<std::uint32_t>(ds.size());
    f.dim = static_cast<std::uint32_t>(pca_dims);
    f.values.resize(static_cast<std::size_t>(y.size()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            f.values[static_cast<std::size_t>(r * y.cols() + c)] = static_cast<float>(y(r, c));
        }
    }
    for (std::size_t k = 0; k < ds.size(); ++k) {
        f.labels.push_back(ds.has_labels() ? static_cast<std::int16_t>(ds.labels[k].class_id) : std::int16_t{-1});
        f.snr_db.push_back(ds.has_labels() ? static_cast<std::int16_t>(ds.labels[k].snr_db) : std::int16_t{0});
    }
    f.explained_ratio.assign(p.explained_ratio.data(), p.explained_ratio.data() + p.explained_ratio.size());
    return f;
}

inline void write_embeddings(std::ostream& os, const EmbeddingFile& f) {
    require(f.values.size() == std::size_t{f.rows} * f.dim && f.labels.size() == f.rows && f.snr_db.size() == f.rows &&
                f.explained_ratio.size() == f.dim,
            ErrorCode::shape_mismatch, "embedding file fields are inconsistent");
    binary::put_u32(os, f.rows);
    binary::put_u32(os, f.dim);
    binary::put_f32s(os, f.values);
    for (auto v : f.labels) binary::put_i16(os, v);
    for (auto v : f.snr_db) binary::put_i16(os, v);
    for (double v : f.explained_ratio) binary::put_f64(os, v);
    require(static_cast<bool>(os), ErrorCode::io, "embedding write failed");
}

inline EmbeddingFile parse_embeddings(std::span<const unsigned char> bytes) {
    binary::Reader r(bytes, ErrorCode::truncated_body);
    EmbeddingFile f;
    f.rows = r.u32();
    f.dim = r.u32();
    f.values.resize(std::size_t{f.rows} * f.dim);
    r.f32s(f.values);
    for (std::uint32_t k = 0; k < f.rows; ++k) f.labels.push_back(r.i16());
    for (std::uint32_t k = 0; k < f.rows; ++k) f.snr_db.push_back(r.i16());
    for (std::uint32_t k = 0; k < f.dim; ++k) f.explained_ratio.push_back(r.f64());
    require(r.remaining() == 0, ErrorCode::bad_header, "trailing bytes after embedding file");
    return f;
}

} // namespace rfmsm
