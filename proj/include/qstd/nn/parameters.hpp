// Named, ordered parameter collections and their float32 tensor container.
#pragma once

#include "qstd/ad/autograd.hpp"
#include "qstd/binary_io.hpp"

#include <map>
#include <string>
#include <vector>

namespace qstd::nn {

using ad::Var;

/// Insertion-ordered set of named trainable tensors.
class ParameterStore {
 public:
  Var& add(const std::string& name, Mat init, bool decay = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Var(std::move(init), true), decay});
    return entries_.back().var;
  }

  Var& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  const Var& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  struct Entry {
    std::string name;
    Var var;
    bool decay = true;
  };
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }
  void set_trainable(bool trainable) {
    for (auto& e : entries_) e.var.set_requires_grad(trainable);
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
    return n;
  }

  /// Rounds every value to float32, matching what a checkpoint stores.
  void round_to_float() {
    for (auto& e : entries_) {
      auto& v = e.var.mutable_value();
      for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(static_cast<float>(v.data()[i]));
    }
  }

  /// Hash of names, shapes and float32-rounded values.
  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& e : entries_) {
      h.str(e.name);
      h.value(static_cast<std::int64_t>(e.var.rows()));
      h.value(static_cast<std::int64_t>(e.var.cols()));
      for (Index i = 0; i < e.var.value().size(); ++i) h.value(static_cast<float>(e.var.value().data()[i]));
    }
    return h.digest();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Tensor list body: u32 count, then per tensor
//   str name, u32 ndim (=2), u64 rows, u64 cols, rows*cols f32 (row-major)
inline void write_tensors(io::Writer& w, const ParameterStore& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    w.str(e.name);
    w.u32(2);
    w.u64(static_cast<std::uint64_t>(e.var.rows()));
    w.u64(static_cast<std::uint64_t>(e.var.cols()));
    for (Index i = 0; i < e.var.value().size(); ++i) w.f32(static_cast<float>(e.var.value().data()[i]));
  }
}

/// Reads a tensor list into an already-shaped store; names and shapes must match.
inline void read_tensors(io::Reader& r, ParameterStore& params) {
  const auto count = r.u32();
  if (count != params.size()) {
    throw IoError(r.origin() + ": expected " + std::to_string(params.size()) + " tensors, found " + std::to_string(count));
  }
  for (auto& e : params.entries()) {
    auto name = r.str();
    if (name != e.name) throw IoError(r.origin() + ": expected tensor '" + e.name + "', found '" + name + "'");
    if (r.u32() != 2) throw IoError(r.origin() + ": tensor '" + name + "' is not 2-D");
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != static_cast<std::uint64_t>(e.var.rows()) || cols != static_cast<std::uint64_t>(e.var.cols())) {
      throw IoError(r.origin() + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", expected " + shape_str(e.var.value()));
    }
    auto& v = e.var.mutable_value();
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(r.f32());
  }
}

}  // namespace qstd::nn
