#pragma once

// Reasoner backend that forwards each capability to an HTTP gateway.
//
// Request body: {"role": "recognize"|"propose"|"verify"|"emit", "model": str,
// "payload": {...}, "capabilities": <profile>, "constraints": <rules>}.
// Response body: the role's output document alone. recognize returns an
// activity object, propose a policy array, verify and emit string arrays.

#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>

#include "powerlens/pipeline.hpp"

namespace powerlens {

struct GatewayConfig {
  std::string url;  // scheme://host[:port]
  std::string path = "/v1/reason";
  std::string model;
  std::string key;
  int timeout_s = 30;
};

namespace detail {

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace detail

// Reads `file` when non-empty, then lets POWERLENS_GATEWAY_URL,
// POWERLENS_GATEWAY_MODEL and POWERLENS_GATEWAY_KEY override its fields.
inline GatewayConfig load_gateway_config(const std::string& file = {}) {
  GatewayConfig c;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open gateway config " + file);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError("gateway config " + file + ": " + e.what());
    }
    c.url = detail::require_string(j, "url", "$");
    if (j.contains("path")) c.path = detail::require_string(j, "path", "$");
    if (j.contains("model")) c.model = detail::require_string(j, "model", "$");
    if (j.contains("key")) c.key = detail::require_string(j, "key", "$");
    if (j.contains("timeout_s")) c.timeout_s = static_cast<int>(detail::require_int(j, "timeout_s", "$"));
  }
  c.url = detail::env_or("POWERLENS_GATEWAY_URL", c.url);
  c.model = detail::env_or("POWERLENS_GATEWAY_MODEL", c.model);
  c.key = detail::env_or("POWERLENS_GATEWAY_KEY", c.key);
  if (c.url.empty()) throw ConfigError("gateway url is not configured (POWERLENS_GATEWAY_URL)");
  return c;
}

class RemoteBackend : public ReasonerBackend {
 public:
  RemoteBackend(GatewayConfig cfg, const CapabilityProfile& caps, const ConstraintSet& rules)
      : cfg_(std::move(cfg)), caps_json_(to_json(caps)), rules_json_(to_json(rules)) {
    client_ = std::make_unique<httplib::Client>(cfg_.url);
    client_->set_connection_timeout(cfg_.timeout_s, 0);
    client_->set_read_timeout(cfg_.timeout_s, 0);
    if (!cfg_.key.empty()) client_->set_bearer_token_auth(cfg_.key);
  }

  std::string name() const override { return "remote"; }

  ActivityResult recognize(const DecisionContext& ctx) override {
    Json history = Json::array();
    for (const auto& [app, minutes] : ctx.app_history) history.push_back({{"app", app}, {"minutes", minutes}});
    const Json out = call("recognize", Json{{"device_state", to_json(ctx.device_state)},
                                            {"ui_descriptor", ctx.ui_descriptor},
                                            {"app_history", history}});
    return parse("recognize", [&] { return activity_from_json(out); });
  }

  Policy propose(const ProposalInput& in) override {
    Json rules = Json::array();
    for (const auto& r : in.rules) rules.push_back(to_json(r));
    const Json out = call("propose", Json{{"activity", to_json(in.activity)},
                                          {"state", to_json(in.state)},
                                          {"locks", in.locks},
                                          {"rules", rules}});
    return parse("propose", [&] { return policy_from_json(out); });
  }

  std::vector<std::string> verify_assist(const Policy& p, const ConstraintSet&, const CapabilityProfile&) override {
    return strings("verify", call("verify", Json{{"policy", to_json(p)}}));
  }

  std::vector<std::string> emit_commands(const Policy& p, const CapabilityProfile&) override {
    return strings("emit", call("emit", Json{{"policy", to_json(p)}}));
  }

 private:
  Json call(const std::string& role, Json payload) {
    const Json body{{"role", role},
                    {"model", cfg_.model},
                    {"payload", std::move(payload)},
                    {"capabilities", caps_json_},
                    {"constraints", rules_json_}};
    auto res = client_->Post(cfg_.path, body.dump(), "application/json");
    if (!res) throw BackendError(role + ": gateway unreachable (" + httplib::to_string(res.error()) + ")");
    if (res->status != 200) throw BackendError(role + ": gateway returned HTTP " + std::to_string(res->status));
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error&) {
      throw BackendError(role + ": response is not a JSON document");
    }
  }

  template <class F>
  static auto parse(const std::string& role, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      throw BackendError(role + ": non-conforming response: " + e.what());
    } catch (const Json::exception& e) {
      throw BackendError(role + ": non-conforming response: " + e.what());
    }
  }

  static std::vector<std::string> strings(const std::string& role, const Json& out) {
    if (!out.is_array()) throw BackendError(role + ": expected a string array");
    std::vector<std::string> v;
    for (const auto& s : out) {
      if (!s.is_string()) throw BackendError(role + ": expected a string array");
      v.push_back(s.get<std::string>());
    }
    return v;
  }

  GatewayConfig cfg_;
  Json caps_json_;
  Json rules_json_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace powerlens
