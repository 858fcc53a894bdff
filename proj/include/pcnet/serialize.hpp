#pragma once

// JSON forms of configs and reports. Readers are strict: unknown keys and
// wrong types throw std::invalid_argument naming the offending path; missing
// keys keep their defaults.

#include "pcnet/attacks.hpp"
#include "pcnet/training.hpp"

#include <json.hpp>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

using Json = nlohmann::ordered_json;

Json to_json(const NetSpec& v);
Json to_json(const NoiseSpec& v);
Json to_json(const HyperParams& v);
Json to_json(const AuxParams& v);
Json to_json(const TrainConfig& v);
Json to_json(const AttackConfig& v);
Json to_json(const EvalResult& v);
Json to_json(const TrainReport& v);
Json to_json(const AttackResult& v);

NetSpec net_spec_from_json(const Json& j, const std::string& path = "model");
NoiseSpec noise_spec_from_json(const Json& j, const std::string& path = "noise");
HyperParams hyper_params_from_json(const Json& j, const std::string& path = "hp");
AuxParams aux_params_from_json(const Json& j, const std::string& path = "aux");
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");
AttackConfig attack_config_from_json(const Json& j, const std::string& path = "attack");
TrainReport train_report_from_json(const Json& j, const std::string& path = "report");

/// Reads the members of one JSON object, rejecting any key never asked for.
class StrictObject {
public:
    StrictObject(const Json& j, std::string path);

    template <class T>
    void get(const char* key, T& out) {
        if (const Json* v = find(key)) {
            try {
                out = v->get<T>();
            } catch (const nlohmann::json::exception& e) {
                throw std::invalid_argument(path_ + "." + key + ": " + e.what());
            }
        }
    }
    /// The member, or nullptr when absent. Marks the key as known.
    const Json* find(const char* key);
    std::string child(const char* key) const { return path_ + "." + key; }
    /// Throws on the first key not requested through get()/find().
    void finish() const;

private:
    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
