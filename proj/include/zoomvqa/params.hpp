#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomvqa/error.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/tape.hpp"
#include "zoomvqa/tensor.hpp"

namespace zoomvqa {

/// Ordered, named parameter tensors of one network.
template <std::floating_point T>
class ParamSet {
 public:
  std::size_t add(std::string name, BasicTensor<T> value) {
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return tensors_.size() - 1;
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  BasicTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const BasicTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw ContractError("no parameter named '" + name + "'");
  }
  BasicTensor<T>& at(const std::string& name) { return tensors_[index(name)]; }
  const BasicTensor<T>& at(const std::string& name) const { return tensors_[index(name)]; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  template <std::floating_point U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(numel());
    for (const auto& t : tensors_) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != numel()) throw DimensionError("flat parameter vector has wrong length");
    std::size_t k = 0;
    for (auto& t : tensors_)
      for (auto& v : t.data()) v = static_cast<T>(flat[k++]);
  }

  /// Architecture signature: names and shapes in order.
  std::string signature() const {
    std::string s;
    for (std::size_t i = 0; i < size(); ++i) s += names_[i] + shape_str(tensors_[i].shape()) + ";";
    return s;
  }

 private:
  std::vector<std::string> names_;
  std::vector<BasicTensor<T>> tensors_;
};

/// Records every parameter as a gradient-carrying leaf.
template <std::floating_point T>
std::vector<Var> bind(BasicTape<T>& tape, const ParamSet<T>& params, bool requires_grad = true) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.leaf(params[i], requires_grad));
  return vars;
}

/// Parameters bound to a tape, addressable by name.
template <std::floating_point T>
struct BoundParams {
  const ParamSet<T>* set = nullptr;
  std::vector<Var> vars;

  Var operator()(const std::string& name) const { return vars[set->index(name)]; }
};

template <std::floating_point T>
BoundParams<T> bind_params(BasicTape<T>& tape, const ParamSet<T>& params, bool requires_grad = true) {
  return {&params, bind(tape, params, requires_grad)};
}

/// Gradients of bound parameters, flattened in parameter order.
template <std::floating_point T>
std::vector<double> flat_grads(const BasicTape<T>& tape, const std::vector<Var>& vars) {
  std::vector<double> out;
  for (Var v : vars) {
    const auto& g = tape.grad(v);
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

/// Kaiming-uniform (fan-in) weights and biases, as PyTorch's default init.
template <class Rng>
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain = std::sqrt(2.0)) {
  Tensor t(std::move(shape));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

template <class Rng>
Tensor bias_uniform(std::size_t n, std::size_t fan_in, Rng& rng) {
  Tensor t(Shape{n});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoint: <u64 LE header length><UTF-8 JSON header><f32 LE payload>.
// Header: {"kind", "arch", "arch_hash", "tensors": [{"name","shape","offset"}]}
// with offsets counted in floats.

struct Checkpoint {
  std::string kind;
  nlohmann::ordered_json arch;
  std::uint64_t arch_hash = 0;
  ParamSet<float> params;
};

inline std::uint64_t arch_hash(const nlohmann::ordered_json& arch, const ParamSet<float>& params) {
  return fnv1a(arch.dump() + "|" + params.signature());
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["kind"] = ck.kind;
  header["arch"] = ck.arch;
  header["arch_hash"] = std::to_string(arch_hash(ck.arch, ck.params));
  header["tensors"] = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    header["tensors"].push_back(
        {{"name", ck.params.name(i)}, {"shape", ck.params[i].shape()}, {"offset", offset}});
    offset += ck.params[i].numel();
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  unsigned char lenbuf[8];
  for (int b = 0; b < 8; ++b) lenbuf[b] = static_cast<unsigned char>((len >> (8 * b)) & 0xff);
  out.write(reinterpret_cast<const char*>(lenbuf), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    for (float v : ck.params[i].data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      unsigned char buf[4];
      for (int b = 0; b < 4; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
      out.write(reinterpret_cast<const char*>(buf), 4);
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  unsigned char lenbuf[8];
  if (!in.read(reinterpret_cast<char*>(lenbuf), 8)) throw CheckpointError("truncated checkpoint header");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(lenbuf[b]) << (8 * b);
  if (len > (std::uint64_t{1} << 30)) throw CheckpointError("implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated checkpoint header");
  Checkpoint ck;
  std::vector<float> payload;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % 4 != 0) throw CheckpointError("payload is not a whole number of floats");
    payload.resize(raw.size() / 4);
    for (std::size_t i = 0; i < payload.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
      std::memcpy(&payload[i], &bits, 4);
    }
  }
  try {
    const auto header = nlohmann::ordered_json::parse(text);
    ck.kind = header.at("kind").get<std::string>();
    ck.arch = header.at("arch");
    for (const auto& t : header.at("tensors")) {
      Shape shape = t.at("shape").get<Shape>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(shape);
      if (offset + n > payload.size()) throw CheckpointError("tensor '" + t.at("name").get<std::string>() + "' out of bounds");
      ck.params.add(t.at("name").get<std::string>(),
                    Tensor(shape, std::vector<float>(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                                     payload.begin() + static_cast<std::ptrdiff_t>(offset + n))));
    }
    ck.arch_hash = std::stoull(header.at("arch_hash").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + std::string(e.what()));
  }
  if (ck.arch_hash != arch_hash(ck.arch, ck.params)) {
    throw CheckpointError("architecture hash mismatch in " + path.string());
  }
  return ck;
}

}  // namespace zoomvqa
