#pragma once

// Per-iteration A-LR statistics, the auxiliary z_t identity check, bound
// violation counting, and the trace CSV / metadata JSON formats.

#include <softcal/calibrators.hpp>
#include <softcal/error.hpp>
#include <softcal/numerics.hpp>
#include <softcal/optim.hpp>
#include <softcal/serialization.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace softcal {

/// Five-number summary of the A-LR vector at one step.
struct ALRSnapshot {
    std::uint64_t t = 0;
    double min = 0.0;
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    double max = 0.0;
};

inline ALRSnapshot summarize_alr(ConstView alr, std::uint64_t t = 0) {
    if (alr.empty()) throw InputDomainError("summarize_alr: empty A-LR vector");
    return {t,
            percentile_nearest_rank(alr, 0.0),
            percentile_nearest_rank(alr, 25.0),
            percentile_nearest_rank(alr, 50.0),
            percentile_nearest_rank(alr, 75.0),
            percentile_nearest_rank(alr, 100.0)};
}

/// A-LR 1/denominator(sqrt(v_t)) of the step that produced `state`.
inline ALRSnapshot snapshot_alr(const OptimizerState& state, const HyperParams& hp) {
    if (state.t == 0) throw InputDomainError("snapshot_alr: no step has been taken yet");
    Vector v = state.v;
    if (hp.bias_correction && state.moment != SecondMomentKind::None && state.moment != SecondMomentKind::Adagrad) {
        const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
        if (c2 > 0.0)
            for (double& x : v) x /= c2;
    }
    Vector denom = step_denominator(state, v, hp, state.t);
    for (double& d : denom) d = 1.0 / d;
    return summarize_alr(denom, state.t);
}

/// Everything needed to check one step of the z_t recursion:
/// x_{t-1}, x_t, x_{t+1}, m_{t-1}, v_{t-1}, v_t and g_t.
struct ZWindow {
    Method method = Method::Adam;
    Vector x_prev;
    Vector x;
    Vector x_next;
    Vector m_prev;
    Vector v_prev;
    Vector v;
    Vector g;

    /// `before` is the state after step t-1 (holds x_t, m_{t-1}, v_{t-1}),
    /// `after` the state after step t. `x_prev` is x_{t-1}; for t = 1 pass x_1.
    static ZWindow from_states(const OptimizerState& before, const OptimizerState& after, ConstView x_prev,
                               ConstView g) {
        if (before.method != after.method || before.moment != after.moment) {
            throw InputDomainError("z_residual: window mixes states of different methods");
        }
        if (after.t != before.t + 1) throw InputDomainError("z_residual: states are not consecutive");
        return {after.method,
                Vector(x_prev.begin(), x_prev.end()),
                before.x,
                after.x,
                before.m,
                before.v,
                after.v,
                Vector(g.begin(), g.end())};
    }
};

/// ||z_{t+1} - z_t - RHS|| / max(1, ||z_t||) with z_t = x_t + beta1/(1-beta1) (x_t - x_{t-1})
/// and RHS = eta beta1/(1-beta1) (a_{t-1} - a_t) m_{t-1} - eta a_t g_t, a = 1/denominator.
/// Holds exactly for constant eta without bias correction.
inline double z_residual(const ZWindow& w, const HyperParams& hp) {
    const std::size_t d = w.x.size();
    for (const Vector* v : {&w.x_prev, &w.x_next, &w.m_prev, &w.v_prev, &w.v, &w.g}) {
        detail::require_same_length(v->size(), d, "z_residual");
    }
    if (hp.bias_correction) throw ConfigError("z_residual: the identity assumes no bias correction");
    if (!hp.decay.empty()) throw ConfigError("z_residual: the identity assumes a constant eta");

    OptimizerState probe;
    probe.method = w.method;
    probe.moment = second_moment_kind(w.method, hp);
    const Vector a_prev_d = step_denominator(probe, w.v_prev, hp, 1);
    const Vector a_d = step_denominator(probe, w.v, hp, 1);

    const double b1 = uses_first_moment(w.method) ? hp.beta1 : 0.0;
    const double k = b1 / (1.0 - b1);
    const double eta = hp.eta;
    double num = 0.0;
    double zt_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double z_t = w.x[j] + k * (w.x[j] - w.x_prev[j]);
        const double z_next = w.x_next[j] + k * (w.x_next[j] - w.x[j]);
        const double a_prev = 1.0 / a_prev_d[j];
        const double a = 1.0 / a_d[j];
        const double rhs = eta * k * (a_prev - a) * w.m_prev[j] - eta * a * w.g[j];
        const double r = z_next - z_t - rhs;
        num += r * r;
        zt_sq += z_t * z_t;
    }
    return std::sqrt(num) / std::max(1.0, std::sqrt(zt_sq));
}

/// One row of a trace. Row t describes iterate x_t and the step taken from it;
/// the final row (t = T+1) carries only loss and gradient norm.
struct TraceRow {
    std::uint64_t t = 0;
    double loss = 0.0;
    double grad_norm_sq = 0.0;
    std::optional<double> eta_t;
    std::optional<ALRSnapshot> alr;
    std::optional<double> z_residual;
};

struct TrajectoryRecord {
    std::vector<TraceRow> rows;
    Json metadata = Json::object();
    bool diverged = false;
    std::optional<std::uint64_t> diverged_step;
};

/// Number of snapshots falling outside [mu_lower, mu_upper] (relative slack 1e-12).
inline std::size_t bound_violations(const TrajectoryRecord& traj, const ALRBounds& bounds) {
    std::size_t with_snapshot = 0;
    std::size_t count = 0;
    for (const TraceRow& r : traj.rows) {
        if (!r.alr) continue;
        ++with_snapshot;
        if (r.alr->min < bounds.mu_lower * (1.0 - 1e-12) || r.alr->max > bounds.mu_upper * (1.0 + 1e-12)) ++count;
    }
    if (with_snapshot == 0) throw InputDomainError("bound_violations: trajectory has no A-LR snapshots");
    return count;
}

inline constexpr const char* kTraceHeader = "t,loss,grad_norm_sq,eta_t,alr_min,alr_p25,alr_median,alr_p75,alr_max,z_residual";

namespace detail {

inline void append_num(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

inline void append_opt(std::string& out, const std::optional<double>& v) {
    out += ',';
    if (v) append_num(out, *v);
}

}  // namespace detail

inline std::string trace_csv(const TrajectoryRecord& traj) {
    std::string out = kTraceHeader;
    out += '\n';
    for (const TraceRow& r : traj.rows) {
        out += std::to_string(r.t);
        out += ',';
        detail::append_num(out, r.loss);
        out += ',';
        detail::append_num(out, r.grad_norm_sq);
        detail::append_opt(out, r.eta_t);
        if (r.alr) {
            for (double v : {r.alr->min, r.alr->p25, r.alr->median, r.alr->p75, r.alr->max}) {
                out += ',';
                detail::append_num(out, v);
            }
        } else {
            out += ",,,,,";
        }
        detail::append_opt(out, r.z_residual);
        out += '\n';
    }
    return out;
}

/// Writes `<stem>.csv` and `<stem>.json` (metadata, with the diverged marker).
inline void write_trace(const TrajectoryRecord& traj, const std::string& stem) {
    std::ofstream csv(stem + ".csv", std::ios::binary);
    std::ofstream meta(stem + ".json", std::ios::binary);
    if (!csv || !meta) throw Error("write_trace: cannot open '" + stem + "'");
    csv << trace_csv(traj);
    Json m = traj.metadata;
    m["diverged"] = traj.diverged;
    m["diverged_step"] = traj.diverged_step ? Json(*traj.diverged_step) : Json(nullptr);
    m["rows"] = traj.rows.size();
    meta << m.dump(2) << '\n';
}

inline void write_checkpoint(const OptimizerState& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_checkpoint: cannot open '" + path + "'");
    out << to_json(s).dump() << '\n';
}

inline OptimizerState read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_checkpoint: cannot open '" + path + "'");
    return state_from_json(Json::parse(in));
}

}  // namespace softcal
