// Strict JSON object reading: every key must be consumed or it is an error.
#pragma once

#include "qstd/common.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace qstd {

using Json = nlohmann::json;

class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  template <typename T>
  void opt(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(ctx_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  /// Throws on any key not read through this reader.
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(ctx_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

}  // namespace qstd
