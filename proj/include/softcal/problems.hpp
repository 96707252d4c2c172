#pragma once

// Test objectives with analytic gradients, and the stochastic oracle that
// produces g_t with bounded norm (G) and bounded variance (sigma^2).

#include <softcal/data.hpp>
#include <softcal/error.hpp>
#include <softcal/numerics.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace softcal {

enum class ProblemKind { Quadratic, Logistic, Rosenbrock, MLP };

inline std::string_view to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::Quadratic: return "quadratic";
        case ProblemKind::Logistic: return "logistic";
        case ProblemKind::Rosenbrock: return "rosenbrock";
        case ProblemKind::MLP: return "mlp";
    }
    return "?";
}

class Problem {
public:
    virtual ~Problem() = default;

    virtual ProblemKind kind() const = 0;
    virtual std::size_t dim() const = 0;
    virtual double eval(ConstView x) const = 0;
    virtual Vector exact_grad(ConstView x) const = 0;

    /// Lipschitz constant of the gradient (see each problem for its domain of validity).
    virtual double smoothness() const = 0;
    /// Polyak-Lojasiewicz constant, when the problem is known to satisfy it.
    virtual std::optional<double> pl_lambda() const { return std::nullopt; }
    /// f*, when known or computable.
    virtual std::optional<double> optimum_value() const { return std::nullopt; }

    /// Default starting point; `seed` matters only for problems that need symmetry breaking.
    virtual Vector initial_point(std::uint64_t seed) const = 0;

    /// Dataset-backed problems: f = (1/n) sum_i f_i over the training split.
    virtual bool has_examples() const { return false; }
    virtual const std::vector<std::size_t>& training_indices() const {
        throw UnsupportedQueryError("problem has no examples");
    }
    virtual Vector batch_grad(ConstView /*x*/, std::span<const std::size_t> /*idx*/) const {
        throw UnsupportedQueryError("problem has no examples");
    }
    virtual double accuracy(ConstView /*x*/, std::span<const std::size_t> /*idx*/) const {
        throw UnsupportedQueryError("problem has no classifier");
    }
    virtual const Dataset* dataset() const { return nullptr; }

protected:
    void check_dim(ConstView x) const {
        if (x.size() != dim()) {
            throw InputDomainError(std::string(to_string(kind())) + ": x has length " + std::to_string(x.size()) +
                                   ", expected " + std::to_string(dim()));
        }
    }
};

using ProblemPtr = std::shared_ptr<const Problem>;

/// f(x) - f*.
inline double optimality_gap(const Problem& p, ConstView x) {
    const std::optional<double> fstar = p.optimum_value();
    if (!fstar) throw UnsupportedQueryError(std::string(to_string(p.kind())) + ": f* is not available");
    return p.eval(x) - *fstar;
}

/// f(x) = 1/2 sum_j lambda_j x_j^2, minimized at x* = 0 with f* = 0.
class QuadraticProblem final : public Problem {
public:
    explicit QuadraticProblem(Vector spectrum, Vector start = {}) : spectrum_(std::move(spectrum)), start_(std::move(start)) {
        if (spectrum_.empty()) throw InputDomainError("quadratic: empty spectrum");
        for (double l : spectrum_) {
            if (!(l >= 0.0) || !std::isfinite(l)) throw InputDomainError("quadratic: eigenvalues must be finite and >= 0");
        }
        if (!start_.empty() && start_.size() != spectrum_.size()) throw InputDomainError("quadratic: start length");
    }

    /// d eigenvalues log-spaced between lo and hi (inclusive).
    static std::shared_ptr<QuadraticProblem> log_spaced(std::size_t d, double lo, double hi, Vector start = {}) {
        if (d == 0 || !(lo > 0.0) || !(hi >= lo)) throw InputDomainError("quadratic: bad log-spaced spectrum");
        Vector s(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double u = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
            s[j] = lo * std::pow(hi / lo, u);
        }
        return std::make_shared<QuadraticProblem>(std::move(s), std::move(start));
    }

    ProblemKind kind() const override { return ProblemKind::Quadratic; }
    std::size_t dim() const override { return spectrum_.size(); }
    const Vector& spectrum() const { return spectrum_; }

    double eval(ConstView x) const override {
        check_dim(x);
        double f = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) f += spectrum_[j] * x[j] * x[j];
        return 0.5 * f;
    }

    Vector exact_grad(ConstView x) const override {
        check_dim(x);
        return hadamard(spectrum_, x);
    }

    double smoothness() const override { return *std::max_element(spectrum_.begin(), spectrum_.end()); }

    std::optional<double> pl_lambda() const override {
        const double lo = *std::min_element(spectrum_.begin(), spectrum_.end());
        if (lo > 0.0) return lo;
        return std::nullopt;
    }

    std::optional<double> optimum_value() const override { return 0.0; }

    Vector initial_point(std::uint64_t) const override {
        return start_.empty() ? Vector(dim(), 1.0) : start_;
    }

private:
    Vector spectrum_;
    Vector start_;
};

/// Chained Rosenbrock: sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2, f* = 0 at (1,...,1).
class RosenbrockProblem final : public Problem {
public:
    explicit RosenbrockProblem(std::size_t d = 2, Vector start = {}) : d_(d), start_(std::move(start)) {
        if (d_ < 2) throw InputDomainError("rosenbrock: dimension must be >= 2");
        if (!start_.empty() && start_.size() != d_) throw InputDomainError("rosenbrock: start length");
    }

    ProblemKind kind() const override { return ProblemKind::Rosenbrock; }
    std::size_t dim() const override { return d_; }

    double eval(ConstView x) const override {
        check_dim(x);
        double f = 0.0;
        for (std::size_t i = 0; i + 1 < d_; ++i) {
            const double a = x[i + 1] - x[i] * x[i];
            const double b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
        }
        return f;
    }

    Vector exact_grad(ConstView x) const override {
        check_dim(x);
        Vector g(d_, 0.0);
        for (std::size_t i = 0; i + 1 < d_; ++i) {
            const double a = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * a;
        }
        return g;
    }

    /// Gershgorin bound on the Hessian over the box [-2, 2]^d. Rosenbrock is
    /// not globally L-smooth.
    double smoothness() const override { return 7402.0; }

    std::optional<double> optimum_value() const override { return 0.0; }

    Vector initial_point(std::uint64_t) const override {
        if (!start_.empty()) return start_;
        Vector x(d_);
        for (std::size_t i = 0; i < d_; ++i) x[i] = i % 2 == 0 ? -1.2 : 1.0;
        return x;
    }

private:
    std::size_t d_;
    Vector start_;
};

namespace detail {

/// Numerically stable log-softmax cross-entropy. Writes softmax into `p`.
inline double softmax_xent(std::span<const double> logits, std::uint32_t label, std::span<double> p) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - mx);
        s += p[c];
    }
    for (double& q : p) q /= s;
    return -(logits[label] - mx - std::log(s));
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

/// Shared plumbing of the two classifiers: mean loss over the training split plus (l2/2)||x||^2.
class ClassifierProblem : public Problem {
public:
    ClassifierProblem(std::shared_ptr<const Dataset> data, double l2) : data_(std::move(data)), l2_(l2) {
        if (!data_) throw InputDomainError("classifier: null dataset");
        if (data_->train.empty()) throw InputDomainError("classifier: empty training split");
        if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InputDomainError("classifier: l2 must be >= 0");
    }

    bool has_examples() const override { return true; }
    const std::vector<std::size_t>& training_indices() const override { return data_->train; }
    const Dataset* dataset() const override { return data_.get(); }
    double l2() const { return l2_; }

    double eval(ConstView x) const override {
        check_dim(x);
        Scratch sc;
        double f = 0.0;
        for (std::size_t i : data_->train) f += example_loss(x, i, nullptr, sc);
        return f / static_cast<double>(data_->train.size()) + 0.5 * l2_ * squared_norm(x);
    }

    Vector exact_grad(ConstView x) const override { return batch_grad(x, data_->train); }

    Vector batch_grad(ConstView x, std::span<const std::size_t> idx) const override {
        check_dim(x);
        if (idx.empty()) throw InputDomainError("batch_grad: empty batch");
        Scratch sc;
        Vector g(dim(), 0.0);
        for (std::size_t i : idx) example_loss(x, i, &g, sc);
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv + l2_ * x[j];
        return g;
    }

    double accuracy(ConstView x, std::span<const std::size_t> idx) const override {
        check_dim(x);
        if (idx.empty()) throw InputDomainError("accuracy: empty index set");
        Scratch sc;
        std::size_t correct = 0;
        for (std::size_t i : idx) correct += predict(x, i, sc) == data_->labels[i] ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(idx.size());
    }

protected:
    /// Per-call work buffers, so a problem can be shared across threads.
    struct Scratch {
        Vector act, dact, logits, probs;
    };

    /// Loss of example i; when `grad` is non-null its gradient is accumulated there.
    virtual double example_loss(ConstView x, std::size_t i, Vector* grad, Scratch& sc) const = 0;
    virtual std::size_t predict(ConstView x, std::size_t i, Scratch& sc) const = 0;

    std::shared_ptr<const Dataset> data_;
    double l2_;
};

/// Multinomial logistic regression. Parameters are laid out per class as
/// [w_c (d_in), b_c]. Convex; strongly convex only when l2 > 0.
class LogisticProblem final : public ClassifierProblem {
public:
    LogisticProblem(std::shared_ptr<const Dataset> data, double l2 = 0.0, std::string fstar_cache_dir = {})
        : ClassifierProblem(std::move(data), l2), cache_dir_(std::move(fstar_cache_dir)) {
        classes_ = data_->num_classes;
        stride_ = data_->d_in + 1;
        double r2 = 0.0;
        for (std::size_t i : data_->train) r2 = std::max(r2, squared_norm(data_->row(i)) + 1.0);
        smoothness_ = 0.5 * r2 + l2_;
    }

    ProblemKind kind() const override { return ProblemKind::Logistic; }
    std::size_t dim() const override { return classes_ * stride_; }

    /// The softmax cross-entropy Hessian is bounded by (1/2) max_i ||[x_i, 1]||^2 I.
    double smoothness() const override { return smoothness_; }

    std::optional<double> pl_lambda() const override {
        if (l2_ > 0.0) return l2_;
        return std::nullopt;
    }

    Vector initial_point(std::uint64_t) const override { return Vector(dim(), 0.0); }

    /// f* from a long full-gradient descent run (step 1/L), cached in memory and,
    /// when a cache directory is configured, in a JSON sidecar keyed by dataset hash and l2.
    std::optional<double> optimum_value() const override {
        std::call_once(fstar_once_, [this] { fstar_ = load_or_compute_fstar(); });
        return fstar_;
    }

    /// Number of descent steps used for f* (exposed for tests).
    static constexpr std::size_t kFstarMaxSteps = 1'000'000;

    double descend_to_optimum(std::size_t max_steps) const {
        Vector x = initial_point(0);
        const double step = 1.0 / smoothness_;
        for (std::size_t k = 0; k < max_steps; ++k) {
            Vector g = exact_grad(x);
            if (squared_norm(g) < 1e-26) break;
            for (std::size_t j = 0; j < x.size(); ++j) x[j] -= step * g[j];
        }
        return eval(x);
    }

    std::string sidecar_path() const {
        if (cache_dir_.empty()) return {};
        char name[96];
        std::snprintf(name, sizeof name, "logistic_fstar_%016llx_%.6g.json",
                      static_cast<unsigned long long>(data_->hash), l2_);
        return (std::filesystem::path(cache_dir_) / name).string();
    }

protected:
    double example_loss(ConstView x, std::size_t i, Vector* grad, Scratch& sc) const override {
        const auto xi = data_->row(i);
        const std::uint32_t y = data_->labels[i];
        sc.logits.resize(classes_);
        sc.probs.resize(classes_);
        for (std::size_t c = 0; c < classes_; ++c) {
            const double* w = x.data() + c * stride_;
            double z = w[data_->d_in];
            for (std::size_t j = 0; j < data_->d_in; ++j) z += w[j] * xi[j];
            sc.logits[c] = z;
        }
        const double loss = detail::softmax_xent(sc.logits, y, sc.probs);
        if (grad) {
            for (std::size_t c = 0; c < classes_; ++c) {
                const double dz = sc.probs[c] - (c == y ? 1.0 : 0.0);
                double* gw = grad->data() + c * stride_;
                for (std::size_t j = 0; j < data_->d_in; ++j) gw[j] += dz * xi[j];
                gw[data_->d_in] += dz;
            }
        }
        return loss;
    }

    std::size_t predict(ConstView x, std::size_t i, Scratch& sc) const override {
        example_loss(x, i, nullptr, sc);
        return detail::argmax(sc.logits);
    }

private:
    double load_or_compute_fstar() const {
        const std::string path = sidecar_path();
        if (!path.empty() && std::filesystem::exists(path)) {
            std::ifstream in(path);
            const auto j = nlohmann::json::parse(in, nullptr, false);
            if (!j.is_discarded() && j.value("dataset_hash", std::string{}) == hash_hex() &&
                j.value("l2", -1.0) == l2_ && j.contains("fstar")) {
                return j["fstar"].get<double>();
            }
        }
        const double fstar = descend_to_optimum(kFstarMaxSteps);
        if (!path.empty()) {
            std::filesystem::create_directories(cache_dir_);
            std::ofstream out(path);
            out << nlohmann::json{{"dataset_hash", hash_hex()}, {"l2", l2_}, {"fstar", fstar},
                                  {"max_steps", kFstarMaxSteps}}
                       .dump(2)
                << '\n';
        }
        return fstar;
    }

    std::string hash_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(data_->hash));
        return buf;
    }

    std::size_t classes_ = 0;
    std::size_t stride_ = 0;
    double smoothness_ = 0.0;
    std::string cache_dir_;
    mutable std::once_flag fstar_once_;
    mutable std::optional<double> fstar_;
};

/// Two-layer tanh network with softmax output, trained by mean cross-entropy.
/// Layout: W1 (hidden x d_in), b1 (hidden), W2 (classes x hidden), b2 (classes).
class MlpProblem final : public ClassifierProblem {
public:
    static constexpr std::size_t kMaxHidden = 64;

    MlpProblem(std::shared_ptr<const Dataset> data, std::size_t hidden, double l2 = 0.0)
        : ClassifierProblem(std::move(data), l2), hidden_(hidden) {
        if (hidden_ == 0 || hidden_ > kMaxHidden) throw InputDomainError("mlp: hidden units must lie in [1, 64]");
        d_in_ = data_->d_in;
        classes_ = data_->num_classes;
        smoothness_ = estimate_smoothness();
    }

    ProblemKind kind() const override { return ProblemKind::MLP; }
    std::size_t dim() const override { return hidden_ * d_in_ + hidden_ + classes_ * hidden_ + classes_; }
    std::size_t hidden() const { return hidden_; }

    /// Empirical: twice the largest ratio ||grad(x) - grad(y)|| / ||x - y|| seen over
    /// random nearby pairs drawn around the initialization scale. Not a certificate.
    double smoothness() const override { return smoothness_; }

    Vector initial_point(std::uint64_t seed) const override {
        std::mt19937_64 rng(seed);
        Vector x(dim(), 0.0);
        const double a1 = std::sqrt(6.0 / static_cast<double>(d_in_ + hidden_));
        const double a2 = std::sqrt(6.0 / static_cast<double>(hidden_ + classes_));
        std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
        for (std::size_t k = 0; k < hidden_ * d_in_; ++k) x[w1_off() + k] = u1(rng);
        for (std::size_t k = 0; k < classes_ * hidden_; ++k) x[w2_off() + k] = u2(rng);
        return x;
    }

protected:
    double example_loss(ConstView x, std::size_t i, Vector* grad, Scratch& sc) const override {
        forward(x, i, sc);
        const double loss = detail::softmax_xent(sc.logits, data_->labels[i], sc.probs);
        if (grad) backward(x, i, *grad, sc);
        return loss;
    }

    std::size_t predict(ConstView x, std::size_t i, Scratch& sc) const override {
        forward(x, i, sc);
        return detail::argmax(sc.logits);
    }

private:
    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const { return hidden_ * d_in_; }
    std::size_t w2_off() const { return b1_off() + hidden_; }
    std::size_t b2_off() const { return w2_off() + classes_ * hidden_; }

    void forward(ConstView x, std::size_t i, Scratch& sc) const {
        const auto xi = data_->row(i);
        sc.act.resize(hidden_);
        sc.logits.resize(classes_);
        sc.probs.resize(classes_);
        for (std::size_t h = 0; h < hidden_; ++h) {
            const double* w = x.data() + w1_off() + h * d_in_;
            double z = x[b1_off() + h];
            for (std::size_t j = 0; j < d_in_; ++j) z += w[j] * xi[j];
            sc.act[h] = std::tanh(z);
        }
        for (std::size_t c = 0; c < classes_; ++c) {
            const double* w = x.data() + w2_off() + c * hidden_;
            double z = x[b2_off() + c];
            for (std::size_t h = 0; h < hidden_; ++h) z += w[h] * sc.act[h];
            sc.logits[c] = z;
        }
    }

    // Expects forward() and softmax_xent() to have filled sc.act and sc.probs.
    void backward(ConstView x, std::size_t i, Vector& g, Scratch& sc) const {
        const auto xi = data_->row(i);
        const std::uint32_t y = data_->labels[i];
        sc.dact.assign(hidden_, 0.0);
        for (std::size_t c = 0; c < classes_; ++c) {
            const double dz = sc.probs[c] - (c == y ? 1.0 : 0.0);
            const double* w = x.data() + w2_off() + c * hidden_;
            double* gw = g.data() + w2_off() + c * hidden_;
            for (std::size_t h = 0; h < hidden_; ++h) {
                gw[h] += dz * sc.act[h];
                sc.dact[h] += dz * w[h];
            }
            g[b2_off() + c] += dz;
        }
        for (std::size_t h = 0; h < hidden_; ++h) {
            const double dz = sc.dact[h] * (1.0 - sc.act[h] * sc.act[h]);
            double* gw = g.data() + w1_off() + h * d_in_;
            for (std::size_t j = 0; j < d_in_; ++j) gw[j] += dz * xi[j];
            g[b1_off() + h] += dz;
        }
    }

    double estimate_smoothness() const {
        std::mt19937_64 rng(0x5eed);
        std::normal_distribution<double> n01(0.0, 1.0);
        double worst = 0.0;
        for (int k = 0; k < 32; ++k) {
            Vector x = initial_point(rng());
            for (double& xi : x) xi *= 2.0;
            Vector y = x;
            for (double& yi : y) yi += 1e-3 * n01(rng);
            const double num = norm(subtract(exact_grad(x), exact_grad(y)));
            const double den = norm(subtract(x, y));
            worst = std::max(worst, num / den);
        }
        return 2.0 * worst;
    }

    std::size_t hidden_;
    std::size_t d_in_ = 0;
    std::size_t classes_ = 0;
    double smoothness_ = 0.0;
};

enum class OracleMode { Gaussian, MiniBatch };

/// Stochastic first-order oracle. Output is exact_grad(x) (or a uniformly
/// sampled mini-batch gradient) plus N(0, sigma^2/d) noise per coordinate,
/// rescaled as a whole when its norm exceeds G.
class Oracle {
public:
    Oracle(ProblemPtr problem, double G, double sigma, std::uint64_t seed, OracleMode mode = OracleMode::Gaussian,
           std::size_t batch_size = 1)
        : problem_(std::move(problem)), G_(G), sigma_(sigma), mode_(mode), batch_size_(batch_size), rng_(seed) {
        if (!problem_) throw InputDomainError("oracle: null problem");
        if (!(G_ > 0.0)) throw InputDomainError("oracle: G must be positive (use infinity to disable clipping)");
        if (!(sigma_ >= 0.0) || !std::isfinite(sigma_)) throw InputDomainError("oracle: sigma must be >= 0");
        if (mode_ == OracleMode::MiniBatch) {
            if (!problem_->has_examples()) throw ConfigError("oracle: mini-batch mode needs a dataset problem");
            if (batch_size_ == 0) throw ConfigError("oracle: batch size must be positive");
        }
    }

    Vector stochastic_grad(ConstView x) {
        ++calls_;
        Vector g;
        if (mode_ == OracleMode::MiniBatch) {
            const auto& train = problem_->training_indices();
            batch_.resize(batch_size_);
            for (auto& b : batch_) b = train[static_cast<std::size_t>(rng_() % train.size())];
            g = problem_->batch_grad(x, batch_);
        } else {
            g = problem_->exact_grad(x);
        }
        if (sigma_ > 0.0) {
            std::normal_distribution<double> noise(0.0, sigma_ / std::sqrt(static_cast<double>(g.size())));
            for (double& gi : g) gi += noise(rng_);
        }
        if (std::isfinite(G_)) {
            const double n = norm(g);
            if (n > G_) {
                ++clip_events_;
                const double s = G_ / n;
                for (double& gi : g) gi *= s;
                if (norm(g) > G_) {
                    for (double& gi : g) gi *= 1.0 - std::numeric_limits<double>::epsilon();
                }
            }
        }
        return g;
    }

    const Problem& problem() const { return *problem_; }
    double G() const { return G_; }
    double sigma() const { return sigma_; }
    std::uint64_t calls() const { return calls_; }
    std::uint64_t clip_events() const { return clip_events_; }

private:
    ProblemPtr problem_;
    double G_;
    double sigma_;
    OracleMode mode_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> batch_;
    std::uint64_t calls_ = 0;
    std::uint64_t clip_events_ = 0;
};

}  // namespace softcal
