#pragma once

// Optimizer state machines. Every method is a composition of a first-moment
// rule (none or EMA), a second-moment rule (none, EMA, AMS max, Yogi,
// Adagrad sum) and a Calibrator that maps sqrt(v_t) to the A-LR denominator:
//
//   x_{t+1} = x_t - eta_t * m_t / denominator(sqrt(v_t))

#include <softcal/calibrators.hpp>
#include <softcal/error.hpp>
#include <softcal/numerics.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace softcal {

enum class Method {
    SGD,
    SMomentum,
    Adagrad,
    Adam,
    AMSGrad,
    Yogi,
    PAdam,
    PAMSGrad,
    AdaBound,
    AmsBound,
    Sadam,
    SAMSGrad,
    Custom,
};

/// All named methods, in a fixed order (Custom excluded).
inline constexpr std::array<Method, 12> kNamedMethods = {
    Method::SGD,     Method::SMomentum, Method::Adagrad,  Method::Adam,     Method::AMSGrad, Method::Yogi,
    Method::PAdam,   Method::PAMSGrad,  Method::AdaBound, Method::AmsBound, Method::Sadam,   Method::SAMSGrad,
};

enum class SecondMomentKind { None, EMA, AMS, Yogi, Adagrad };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::SGD: return "sgd";
        case Method::SMomentum: return "s_momentum";
        case Method::Adagrad: return "adagrad";
        case Method::Adam: return "adam";
        case Method::AMSGrad: return "amsgrad";
        case Method::Yogi: return "yogi";
        case Method::PAdam: return "padam";
        case Method::PAMSGrad: return "pamsgrad";
        case Method::AdaBound: return "adabound";
        case Method::AmsBound: return "amsbound";
        case Method::Sadam: return "sadam";
        case Method::SAMSGrad: return "samsgrad";
        case Method::Custom: return "custom";
    }
    return "?";
}

inline Method method_from_string(std::string_view s) {
    for (Method m : kNamedMethods) {
        if (to_string(m) == s) return m;
    }
    if (s == "custom") return Method::Custom;
    throw ConfigError("unknown method '" + std::string(s) + "'");
}

inline std::string_view to_string(SecondMomentKind k) {
    switch (k) {
        case SecondMomentKind::None: return "none";
        case SecondMomentKind::EMA: return "ema";
        case SecondMomentKind::AMS: return "ams";
        case SecondMomentKind::Yogi: return "yogi";
        case SecondMomentKind::Adagrad: return "adagrad";
    }
    return "?";
}

inline SecondMomentKind second_moment_from_string(std::string_view s) {
    for (auto k : {SecondMomentKind::None, SecondMomentKind::EMA, SecondMomentKind::AMS, SecondMomentKind::Yogi,
                   SecondMomentKind::Adagrad}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown second-moment rule '" + std::string(s) + "'");
}

/// Stage-wise decay: from step `step` on, eta is multiplied by `factor`.
struct DecayStage {
    std::uint64_t step = 0;
    double factor = 1.0;
};

struct HyperParams {
    double eta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    Calibrator calibrator;
    bool bias_correction = false;
    std::vector<DecayStage> decay;
    /// Second-moment rule for Method::Custom; ignored otherwise.
    std::optional<SecondMomentKind> custom_moment;

    void validate() const {
        if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive and finite");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
        for (std::size_t i = 0; i < decay.size(); ++i) {
            if (!(decay[i].factor > 0.0 && decay[i].factor <= 1.0)) throw ConfigError("decay factors must lie in (0, 1]");
            if (i > 0 && decay[i].step <= decay[i - 1].step) throw ConfigError("decay steps must be strictly increasing");
        }
        calibrator.validate();
    }

    /// B-LR used by step t (1-based).
    double eta_at(std::uint64_t t) const {
        double e = eta;
        for (const DecayStage& s : decay) {
            if (s.step <= t) e *= s.factor;
        }
        return e;
    }
};

/// Canonical calibrator for a named method. SGD and S-Momentum ignore theirs.
inline Calibrator default_calibrator(Method m) {
    switch (m) {
        case Method::Yogi: return Calibrator::eps_shift(1e-3);
        case Method::PAdam:
        case Method::PAMSGrad: return Calibrator::power_p(0.125, 1e-8);
        case Method::AdaBound:
        case Method::AmsBound: return Calibrator::clip(1e-3, 1.0);
        case Method::Sadam:
        case Method::SAMSGrad: return Calibrator::softplus(50.0);
        default: return Calibrator::eps_shift(1e-8);
    }
}

inline HyperParams default_hyper_params(Method m) {
    HyperParams hp;
    hp.calibrator = default_calibrator(m);
    if (m == Method::Custom) hp.custom_moment = SecondMomentKind::EMA;
    return hp;
}

inline bool uses_first_moment(Method m) {
    return !(m == Method::SGD || m == Method::Adagrad);
}

/// Second-moment rule of a method; Custom reads it from the hyper-parameters.
inline SecondMomentKind second_moment_kind(Method m, const HyperParams& hp) {
    switch (m) {
        case Method::SGD:
        case Method::SMomentum: return SecondMomentKind::None;
        case Method::Adagrad: return SecondMomentKind::Adagrad;
        case Method::Adam:
        case Method::PAdam:
        case Method::AdaBound:
        case Method::Sadam: return SecondMomentKind::EMA;
        case Method::AMSGrad:
        case Method::PAMSGrad:
        case Method::AmsBound:
        case Method::SAMSGrad: return SecondMomentKind::AMS;
        case Method::Yogi: return SecondMomentKind::Yogi;
        case Method::Custom:
            if (!hp.custom_moment) throw ConfigError("custom method needs a second-moment rule");
            return *hp.custom_moment;
    }
    return SecondMomentKind::None;
}

/// Methods whose v_t is a running maximum and therefore nondecreasing.
inline bool is_ams_family(SecondMomentKind k) { return k == SecondMomentKind::AMS; }

/// Throws ConfigError when a named method is paired with a foreign calibrator.
inline void check_pairing(Method m, const Calibrator& c) {
    std::optional<CalibratorKind> required;
    switch (m) {
        case Method::Adagrad:
        case Method::Adam:
        case Method::AMSGrad:
        case Method::Yogi: required = CalibratorKind::EpsShift; break;
        case Method::PAdam:
        case Method::PAMSGrad: required = CalibratorKind::PowerP; break;
        case Method::AdaBound:
        case Method::AmsBound: required = CalibratorKind::Clip; break;
        case Method::Sadam:
        case Method::SAMSGrad: required = CalibratorKind::Softplus; break;
        case Method::SGD:
        case Method::SMomentum:
        case Method::Custom: break;
    }
    if (required && *required != c.kind) {
        throw ConfigError(std::string(to_string(m)) + " requires a " + std::string(to_string(*required)) +
                          " calibrator, got " + std::string(to_string(c.kind)));
    }
}

struct OptimizerState {
    Method method = Method::Adam;
    SecondMomentKind moment = SecondMomentKind::EMA;
    Vector x;
    Vector m;
    Vector v;
    Vector v_tilde;
    std::uint64_t t = 0;

    std::size_t dim() const { return x.size(); }
};

inline OptimizerState init(Method method, std::size_t dim, ConstView x0, const HyperParams& hp) {
    if (dim == 0) throw ConfigError("init: dimension must be positive");
    if (x0.size() != dim) {
        throw InputDomainError("init: x0 has length " + std::to_string(x0.size()) + ", expected " +
                               std::to_string(dim));
    }
    if (!all_finite(x0)) throw InputDomainError("init: x0 must be finite");
    hp.validate();
    check_pairing(method, hp.calibrator);
    OptimizerState s;
    s.method = method;
    s.moment = second_moment_kind(method, hp);
    s.x.assign(x0.begin(), x0.end());
    s.m.assign(dim, 0.0);
    s.v.assign(dim, 0.0);
    s.v_tilde.assign(dim, 0.0);
    return s;
}

/// m_t = beta1 * m_{t-1} + (1 - beta1) * g_t
inline Vector first_moment(ConstView m_prev, ConstView g, double beta1) {
    detail::require_same_length(m_prev.size(), g.size(), "first_moment");
    Vector out(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) out[j] = beta1 * m_prev[j] + (1.0 - beta1) * g[j];
    return out;
}

struct SecondMoment {
    Vector v;
    Vector v_tilde;
};

inline SecondMoment second_moment(SecondMomentKind kind, ConstView v_prev, ConstView v_tilde_prev, ConstView g,
                                  double beta2) {
    detail::require_same_length(v_prev.size(), g.size(), "second_moment");
    detail::require_same_length(v_tilde_prev.size(), g.size(), "second_moment");
    for (double x : v_prev) {
        if (!(x >= 0.0)) throw InputDomainError("second_moment: v_prev must be >= 0");
    }
    const std::size_t d = g.size();
    SecondMoment out{Vector(v_prev.begin(), v_prev.end()), Vector(v_tilde_prev.begin(), v_tilde_prev.end())};
    for (std::size_t j = 0; j < d; ++j) {
        const double g2 = g[j] * g[j];
        switch (kind) {
            case SecondMomentKind::None: break;
            case SecondMomentKind::EMA: out.v[j] = beta2 * v_prev[j] + (1.0 - beta2) * g2; break;
            case SecondMomentKind::AMS:
                out.v_tilde[j] = beta2 * v_tilde_prev[j] + (1.0 - beta2) * g2;
                out.v[j] = std::max(v_prev[j], out.v_tilde[j]);
                break;
            case SecondMomentKind::Yogi: {
                const double diff = v_prev[j] - g2;
                const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                out.v[j] = v_prev[j] - (1.0 - beta2) * sign * g2;
                break;
            }
            case SecondMomentKind::Adagrad: out.v[j] = v_prev[j] + g2; break;
        }
    }
    return out;
}

/// Per-coordinate denominator the next step would use for second moment `v`.
/// Methods without a second moment use 1.
inline Vector step_denominator(const OptimizerState& s, ConstView v, const HyperParams& hp, std::uint64_t t) {
    if (s.moment == SecondMomentKind::None) return Vector(v.size(), 1.0);
    return denominator(hp.calibrator, elementwise_sqrt(v), CalibrationContext{hp.eta, t});
}

/// Advances `s` by one step in place. On error the state is left unchanged.
inline void advance(OptimizerState& s, ConstView g, const HyperParams& hp) {
    const std::uint64_t t = s.t + 1;
    if (g.size() != s.dim()) {
        throw InputDomainError("step: gradient has length " + std::to_string(g.size()) + ", expected " +
                               std::to_string(s.dim()));
    }
    if (!all_finite(g)) throw PoisonedStateError("step: non-finite gradient", t);

    Vector m = uses_first_moment(s.method) ? first_moment(s.m, g, hp.beta1) : Vector(g.begin(), g.end());
    SecondMoment sm = second_moment(s.moment, s.v, s.v_tilde, g, hp.beta2);

    Vector m_hat = m;
    Vector v_hat = sm.v;
    if (hp.bias_correction) {
        const auto tt = static_cast<double>(t);
        if (uses_first_moment(s.method)) {
            const double c1 = 1.0 - std::pow(hp.beta1, tt);
            if (c1 > 0.0)
                for (double& x : m_hat) x /= c1;
        }
        if (s.moment == SecondMomentKind::EMA || s.moment == SecondMomentKind::AMS ||
            s.moment == SecondMomentKind::Yogi) {
            const double c2 = 1.0 - std::pow(hp.beta2, tt);
            if (c2 > 0.0)
                for (double& x : v_hat) x /= c2;
        }
    }

    const Vector denom = step_denominator(s, v_hat, hp, t);
    const double eta_t = hp.eta_at(t);
    Vector x(s.dim());
    for (std::size_t j = 0; j < s.dim(); ++j) x[j] = s.x[j] - eta_t * m_hat[j] / denom[j];
    if (!all_finite(x)) throw PoisonedStateError("step: iterate became non-finite", t);

    s.x = std::move(x);
    s.m = std::move(m);
    s.v = std::move(sm.v);
    s.v_tilde = std::move(sm.v_tilde);
    s.t = t;
}

/// Value-semantics variant of advance().
inline OptimizerState step(OptimizerState s, ConstView g, const HyperParams& hp) {
    advance(s, g, hp);
    return s;
}

}  // namespace softcal
