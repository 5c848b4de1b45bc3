#pragma once

// JSON forms of shared value types. Private to the core library.

#include <initializer_list>

#include "encattack/encoder.hpp"
#include "tensor_store.hpp"

namespace encattack::detail {

/// Schema error on any key outside `allowed`.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::schema, where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorKind::schema, where + ": unknown field '" + k + "'");
  }
}

/// Overwrites `out` when `key` is present.
template <typename T>
void optional_field(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = field<T>(j, key, where);
}

inline json to_json(const ImageSpec& s) {
  return {{"width", s.width},
          {"height", s.height},
          {"channels", s.channels},
          {"patches_per_side", s.patches_per_side},
          {"latent_width", s.latent_width},
          {"output_width", s.output_width},
          {"depth", s.depth}};
}

inline ImageSpec spec_from_json(const json& j, const std::string& where) {
  ImageSpec s;
  s.width = field<std::size_t>(j, "width", where);
  s.height = field<std::size_t>(j, "height", where);
  s.channels = field<std::size_t>(j, "channels", where);
  s.patches_per_side = field<std::size_t>(j, "patches_per_side", where);
  s.latent_width = field<std::size_t>(j, "latent_width", where);
  s.output_width = field<std::size_t>(j, "output_width", where);
  s.depth = field<std::size_t>(j, "depth", where);
  s.validate();
  return s;
}

/// Fields missing from `j` keep the values in `base`.
inline ImageSpec spec_overlay(const json& j, ImageSpec base, const std::string& where) {
  check_keys(j, {"width", "height", "channels", "patches_per_side", "latent_width", "output_width", "depth"}, where);
  optional_field(j, "width", base.width, where);
  optional_field(j, "height", base.height, where);
  optional_field(j, "channels", base.channels, where);
  optional_field(j, "patches_per_side", base.patches_per_side, where);
  optional_field(j, "latent_width", base.latent_width, where);
  optional_field(j, "output_width", base.output_width, where);
  optional_field(j, "depth", base.depth, where);
  base.validate();
  return base;
}

inline json to_json(const KeyDistribution& d) {
  return {{"first_layer_std", d.first_layer_std},
          {"deeper", d.deeper == DeeperWeights::unit_normal ? "unit_normal" : "fan_in_scaled"},
          {"deeper_gain", d.deeper_gain},
          {"bias_std", d.bias_std},
          {"positional_std", d.positional_std}};
}

inline KeyDistribution key_distribution_overlay(const json& j, KeyDistribution base, const std::string& where) {
  check_keys(j, {"first_layer_std", "deeper", "deeper_gain", "bias_std", "positional_std"}, where);
  optional_field(j, "first_layer_std", base.first_layer_std, where);
  optional_field(j, "deeper_gain", base.deeper_gain, where);
  optional_field(j, "bias_std", base.bias_std, where);
  optional_field(j, "positional_std", base.positional_std, where);
  if (j.contains("deeper")) {
    const auto s = field<std::string>(j, "deeper", where);
    if (s == "unit_normal") {
      base.deeper = DeeperWeights::unit_normal;
    } else if (s == "fan_in_scaled") {
      base.deeper = DeeperWeights::fan_in_scaled;
    } else {
      throw Error(ErrorKind::schema, where + ": 'deeper' must be unit_normal or fan_in_scaled");
    }
  }
  return base;
}

inline json to_json(const Permutation& p) { return p.indices(); }

inline Permutation permutation_from_json(const json& j, const std::string& where) {
  std::vector<std::size_t> idx;
  try {
    idx = j.get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, where + ": permutation must be an array of indices (" + e.what() + ")");
  }
  return Permutation::from_indices(std::move(idx));
}

/// Key tensors go into `w`; the returned object describes them.
json key_manifest(const EncoderKey& key, TensorWriter& w);
EncoderKey key_from_manifest(const json& m, const TensorReader& r, const std::string& where);

}  // namespace encattack::detail
