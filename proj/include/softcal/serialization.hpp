#pragma once

// JSON forms of calibrators, hyper-parameters and optimizer checkpoints.

#include <softcal/calibrators.hpp>
#include <softcal/error.hpp>
#include <softcal/optim.hpp>

#include <json.hpp>

#include <string>

namespace softcal {

using Json = nlohmann::json;

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline Json to_json(const Calibrator& c) {
    return Json{{"kind", std::string(to_string(c.kind))},
                {"epsilon", c.epsilon},
                {"beta", c.beta},
                {"p", c.p},
                {"eta_lower", c.eta_lower},
                {"eta_upper", c.eta_upper},
                {"eta_ref", c.eta_ref}};
}

/// Fields absent from `j` fall back to `base` (by default the EpsShift defaults).
inline Calibrator calibrator_from_json(const Json& j, Calibrator base = {}) {
    if (!j.is_object()) throw ConfigError("calibrator must be a JSON object");
    Calibrator c = std::move(base);
    if (j.contains("kind")) c.kind = calibrator_kind_from_string(j["kind"].get<std::string>());
    c.epsilon = detail::get_or(j, "epsilon", c.epsilon);
    c.beta = detail::get_or(j, "beta", c.beta);
    c.p = detail::get_or(j, "p", c.p);
    c.eta_lower = detail::get_or(j, "eta_lower", c.eta_lower);
    c.eta_upper = detail::get_or(j, "eta_upper", c.eta_upper);
    c.eta_ref = detail::get_or(j, "eta_ref", c.eta_ref);
    c.validate();
    return c;
}

inline Json to_json(const HyperParams& hp) {
    Json decay = Json::array();
    for (const DecayStage& s : hp.decay) decay.push_back(Json::array({s.step, s.factor}));
    Json j{{"eta", hp.eta},
           {"beta1", hp.beta1},
           {"beta2", hp.beta2},
           {"calibrator", to_json(hp.calibrator)},
           {"bias_correction", hp.bias_correction},
           {"decay", decay}};
    if (hp.custom_moment) j["custom_moment"] = std::string(to_string(*hp.custom_moment));
    return j;
}

inline HyperParams hyper_params_from_json(const Json& j, Method method) {
    if (!j.is_object()) throw ConfigError("hyper_params must be a JSON object");
    HyperParams hp = default_hyper_params(method);
    hp.eta = detail::get_or(j, "eta", hp.eta);
    hp.beta1 = detail::get_or(j, "beta1", hp.beta1);
    hp.beta2 = detail::get_or(j, "beta2", hp.beta2);
    hp.bias_correction = detail::get_or(j, "bias_correction", hp.bias_correction);
    if (j.contains("calibrator")) hp.calibrator = calibrator_from_json(j["calibrator"], hp.calibrator);
    if (j.contains("decay")) {
        hp.decay.clear();
        for (const Json& s : j["decay"]) {
            if (!s.is_array() || s.size() != 2) throw ConfigError("decay entries must be [step, factor]");
            hp.decay.push_back({s[0].get<std::uint64_t>(), s[1].get<double>()});
        }
    }
    if (j.contains("custom_moment")) hp.custom_moment = second_moment_from_string(j["custom_moment"].get<std::string>());
    hp.validate();
    return hp;
}

inline Json to_json(const OptimizerState& s) {
    return Json{{"method", std::string(to_string(s.method))},
                {"moment", std::string(to_string(s.moment))},
                {"t", s.t},
                {"x", s.x},
                {"m", s.m},
                {"v", s.v},
                {"v_tilde", s.v_tilde}};
}

inline OptimizerState state_from_json(const Json& j) {
    OptimizerState s;
    try {
        s.method = method_from_string(j.at("method").get<std::string>());
        s.moment = second_moment_from_string(j.at("moment").get<std::string>());
        s.t = j.at("t").get<std::uint64_t>();
        s.x = j.at("x").get<Vector>();
        s.m = j.at("m").get<Vector>();
        s.v = j.at("v").get<Vector>();
        s.v_tilde = j.at("v_tilde").get<Vector>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("checkpoint: ") + e.what());
    }
    const std::size_t d = s.x.size();
    if (d == 0 || s.m.size() != d || s.v.size() != d || s.v_tilde.size() != d) {
        throw ConfigError("checkpoint: vectors must share one positive length");
    }
    return s;
}

}  // namespace softcal
