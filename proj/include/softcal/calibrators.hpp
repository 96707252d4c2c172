#pragma once

// Denominator rules that turn sqrt(v_t) into the per-coordinate A-LR
// denominator, together with closed-form bounds on the resulting A-LR
// 1/denominator under a gradient bound G and noise bound sigma.

#include <softcal/error.hpp>
#include <softcal/numerics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace softcal {

enum class CalibratorKind { EpsShift, Softplus, PowerP, Clip };

inline std::string_view to_string(CalibratorKind k) {
    switch (k) {
        case CalibratorKind::EpsShift: return "eps_shift";
        case CalibratorKind::Softplus: return "softplus";
        case CalibratorKind::PowerP: return "power_p";
        case CalibratorKind::Clip: return "clip";
    }
    return "?";
}

inline CalibratorKind calibrator_kind_from_string(std::string_view s) {
    if (s == "eps_shift") return CalibratorKind::EpsShift;
    if (s == "softplus") return CalibratorKind::Softplus;
    if (s == "power_p") return CalibratorKind::PowerP;
    if (s == "clip") return CalibratorKind::Clip;
    throw ConfigError("unknown calibrator kind '" + std::string(s) + "'");
}

/// Learning-rate interval applied to eta/sqrt(v) by the Clip rule.
struct ClipInterval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Optional per-step clip interval (t is the 1-based step being taken).
using ClipSchedule = std::function<ClipInterval(std::uint64_t t)>;

/// A denominator rule. Only the fields that belong to `kind` are read.
struct Calibrator {
    CalibratorKind kind = CalibratorKind::EpsShift;
    double epsilon = 1e-8;  // EpsShift, PowerP
    double beta = 50.0;     // Softplus
    double p = 0.5;         // PowerP
    double eta_lower = 0.0; // Clip
    double eta_upper = 0.0; // Clip
    double eta_ref = 0.0;   // Clip; 0 means "the optimizer's base eta"
    ClipSchedule schedule;  // Clip; overrides [eta_lower, eta_upper] when set

    static Calibrator eps_shift(double epsilon) {
        Calibrator c;
        c.kind = CalibratorKind::EpsShift;
        c.epsilon = epsilon;
        c.validate();
        return c;
    }

    static Calibrator softplus(double beta) {
        Calibrator c;
        c.kind = CalibratorKind::Softplus;
        c.beta = beta;
        c.validate();
        return c;
    }

    static Calibrator power_p(double p, double epsilon) {
        Calibrator c;
        c.kind = CalibratorKind::PowerP;
        c.p = p;
        c.epsilon = epsilon;
        c.validate();
        return c;
    }

    static Calibrator clip(double eta_lower, double eta_upper, double eta_ref = 0.0) {
        Calibrator c;
        c.kind = CalibratorKind::Clip;
        c.eta_lower = eta_lower;
        c.eta_upper = eta_upper;
        c.eta_ref = eta_ref;
        c.validate();
        return c;
    }

    void validate() const {
        switch (kind) {
            case CalibratorKind::EpsShift:
                // epsilon = 0 is admitted so the pure 1/sqrt(v) rule can be compared
                // against; alr_bounds() rejects it.
                if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("eps_shift: epsilon must be >= 0");
                break;
            case CalibratorKind::Softplus:
                if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("softplus: beta must be positive");
                break;
            case CalibratorKind::PowerP:
                if (!(p > 0.0 && p <= 0.5)) throw ConfigError("power_p: p must lie in (0, 1/2]");
                if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("power_p: epsilon must be >= 0");
                break;
            case CalibratorKind::Clip:
                if (!(eta_lower >= 0.0) || !(eta_upper > 0.0) || !(eta_lower <= eta_upper) ||
                    !std::isfinite(eta_upper)) {
                    throw ConfigError("clip: need 0 <= eta_lower <= eta_upper, eta_upper > 0");
                }
                if (!(eta_ref >= 0.0) || !std::isfinite(eta_ref)) throw ConfigError("clip: eta_ref must be >= 0");
                break;
        }
    }
};

/// Extra inputs a few rules need: the base eta when a Clip rule has no
/// eta_ref of its own, and the step index for scheduled clip intervals.
struct CalibrationContext {
    double base_eta = 0.0;
    std::uint64_t step = 0;
};

namespace detail {

inline double clip_reference(const Calibrator& c, const CalibrationContext& ctx) {
    const double ref = c.eta_ref > 0.0 ? c.eta_ref : ctx.base_eta;
    if (!(ref > 0.0)) throw ConfigError("clip: no reference eta (set eta_ref or pass a base eta)");
    return ref;
}

inline ClipInterval clip_interval(const Calibrator& c, const CalibrationContext& ctx) {
    if (c.schedule) {
        ClipInterval iv = c.schedule(ctx.step);
        if (!(iv.lower >= 0.0 && iv.lower <= iv.upper && iv.upper > 0.0)) {
            throw ConfigError("clip: schedule returned an invalid interval");
        }
        return iv;
    }
    return {c.eta_lower, c.eta_upper};
}

}  // namespace detail

/// Denominator of a single coordinate.
inline double denominator_at(const Calibrator& c, double sqrt_v, const CalibrationContext& ctx = {}) {
    if (!(sqrt_v >= 0.0) || !std::isfinite(sqrt_v)) {
        throw InputDomainError("denominator: sqrt(v) coordinates must be finite and >= 0");
    }
    double d = 0.0;
    switch (c.kind) {
        case CalibratorKind::EpsShift:
            d = sqrt_v + c.epsilon;
            break;
        case CalibratorKind::Softplus:
            d = softplus_stable(sqrt_v, c.beta);
            break;
        case CalibratorKind::PowerP:
            d = std::pow(sqrt_v * sqrt_v, c.p) + c.epsilon;
            break;
        case CalibratorKind::Clip: {
            const double ref = detail::clip_reference(c, ctx);
            const ClipInterval iv = detail::clip_interval(c, ctx);
            // sqrt(v) = 0 sends eta/sqrt(v) to +inf, which clips to the upper edge.
            const double lr = sqrt_v > 0.0 ? std::clamp(ref / sqrt_v, iv.lower, iv.upper) : iv.upper;
            d = ref / lr;
            break;
        }
    }
    if (!(d > 0.0)) throw InputDomainError("denominator: zero denominator (epsilon = 0 with v = 0?)");
    return d;
}

inline Vector denominator(const Calibrator& c, ConstView sqrt_v, const CalibrationContext& ctx = {}) {
    Vector out(sqrt_v.size());
    for (std::size_t j = 0; j < sqrt_v.size(); ++j) out[j] = denominator_at(c, sqrt_v[j], ctx);
    return out;
}

/// Coordinatewise A-LR 1/denominator.
inline Vector adaptive_lr(const Calibrator& c, ConstView sqrt_v, const CalibrationContext& ctx = {}) {
    Vector out = denominator(c, sqrt_v, ctx);
    for (double& x : out) x = 1.0 / x;
    return out;
}

/// Closed-form interval [mu_lower, mu_upper] containing every A-LR coordinate.
struct ALRBounds {
    double mu_lower = 0.0;
    double mu_upper = 0.0;
};

/// Bounds on 1/denominator for any sqrt(v_j) in [0, sqrt(sigma^2 + G^2)].
/// Throws UnboundedError where the rule admits arbitrarily large A-LR.
inline ALRBounds alr_bounds(const Calibrator& c, double G, double sigma, const CalibrationContext& ctx = {}) {
    if (!(G > 0.0) || !std::isfinite(G)) throw InputDomainError("alr_bounds: G must be positive and finite");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputDomainError("alr_bounds: sigma must be >= 0");
    c.validate();
    const double vmax = sigma * sigma + G * G;
    ALRBounds b;
    switch (c.kind) {
        case CalibratorKind::EpsShift:
            if (c.epsilon == 0.0) throw UnboundedError("alr_bounds: epsilon = 0 leaves the A-LR unbounded above");
            b.mu_lower = 1.0 / (std::sqrt(vmax) + c.epsilon);
            b.mu_upper = 1.0 / c.epsilon;
            break;
        case CalibratorKind::Softplus:
            b.mu_lower = 1.0 / softplus_stable(std::sqrt(vmax), c.beta);
            b.mu_upper = c.beta / std::numbers::ln2;
            break;
        case CalibratorKind::PowerP:
            if (c.epsilon == 0.0) throw UnboundedError("alr_bounds: epsilon = 0 leaves the A-LR unbounded above");
            b.mu_lower = 1.0 / (std::pow(vmax, c.p) + c.epsilon);
            b.mu_upper = 1.0 / c.epsilon;
            break;
        case CalibratorKind::Clip: {
            if (c.schedule) throw ConfigError("alr_bounds: scheduled clip intervals have no static bound");
            const double ref = detail::clip_reference(c, ctx);
            if (c.eta_lower == 0.0) throw ConfigError("alr_bounds: clip with eta_lower = 0 has no positive lower bound");
            b.mu_lower = c.eta_lower / ref;
            b.mu_upper = c.eta_upper / ref;
            break;
        }
    }
    return b;
}

}  // namespace softcal
