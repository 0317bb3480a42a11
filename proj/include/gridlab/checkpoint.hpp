// Copyright 2026 The Gridlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Checkpoints: a JSON manifest next to a little-endian float32 blob holding
// the tensors concatenated in manifest order. An optional second blob holds
// the RMSProp accumulators in the same order so training can resume.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "gridlab/error.hpp"
#include "gridlab/policynet.hpp"
#include "json.hpp"

namespace gridlab {

struct Checkpoint {
  ArchSpec arch;
  int grid = 0;
  Params<float> params;
  std::optional<std::vector<std::vector<float>>> accumulators;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

namespace detail {

constexpr std::uint32_t byteswap32(std::uint32_t u) {
  return (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
}

inline void write_floats(std::ostream& os, std::span<const float> xs) {
  for (float x : xs) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(x);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    char buf[4];
    std::memcpy(buf, &u, 4);
    os.write(buf, 4);
  }
}

inline void read_floats(std::istream& is, std::span<float> xs) {
  for (float& x : xs) {
    char buf[4];
    if (!is.read(buf, 4)) throw Error("checkpoint blob is truncated");
    std::uint32_t u;
    std::memcpy(&u, buf, 4);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    x = std::bit_cast<float>(u);
  }
}

inline std::filesystem::path sibling(const std::filesystem::path& manifest,
                                     const std::string& suffix) {
  auto p = manifest;
  p.replace_extension(suffix);
  return p;
}

}  // namespace detail

/// Writes `<stem>.json`, `<stem>.bin` and, with accumulators, `<stem>.opt.bin`.
inline void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ck) {
  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  nlohmann::ordered_json j;
  j["format"] = "gridlab-checkpoint";
  j["version"] = 1;
  j["arch"] = ck.arch.name();
  j["grid"] = ck.grid;
  j["seed"] = ck.seed;
  j["step"] = ck.step;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : ck.params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  j["tensors"] = tensors;
  const auto blob = detail::sibling(manifest, ".bin");
  j["blob"] = blob.filename().string();
  if (ck.accumulators) j["optimizer_blob"] = detail::sibling(manifest, ".opt.bin").filename().string();
  j["meta"] = ck.meta;

  std::ofstream(manifest) << j.dump(2) << '\n';
  std::ofstream bin(blob, std::ios::binary);
  for (const auto& t : ck.params.tensors) detail::write_floats(bin, t.data);
  if (!bin) throw Error("failed to write " + blob.string());
  if (ck.accumulators) {
    std::ofstream opt(detail::sibling(manifest, ".opt.bin"), std::ios::binary);
    for (const auto& a : *ck.accumulators) detail::write_floats(opt, a);
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open checkpoint " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "gridlab-checkpoint")
    throw Error(manifest.string() + " is not a gridlab checkpoint");
  Checkpoint ck;
  auto arch = parse_arch(j.at("arch").get<std::string>());
  if (!arch) throw Error("checkpoint has unknown architecture " + j.at("arch").dump());
  ck.arch = *arch;
  ck.grid = j.at("grid").get<int>();
  ck.seed = j.value("seed", std::uint64_t{0});
  ck.step = j.value("step", std::int64_t{0});
  if (j.contains("meta")) ck.meta = nlohmann::ordered_json(j["meta"]);
  ck.params = zero_params<float>(ck.arch, ck.grid);
  const auto& listed = j.at("tensors");
  if (listed.size() != ck.params.tensors.size())
    throw Error("checkpoint tensor list does not match " + ck.arch.name());
  for (std::size_t i = 0; i < listed.size(); ++i)
    if (listed[i].at("shape").get<std::vector<int>>() != ck.params.tensors[i].shape)
      throw Error("checkpoint tensor " + ck.params.tensors[i].name + " has the wrong shape");

  const auto dir = manifest.parent_path();
  std::ifstream bin(dir / j.at("blob").get<std::string>(), std::ios::binary);
  if (!bin) throw Error("cannot open checkpoint blob for " + manifest.string());
  for (auto& t : ck.params.tensors) detail::read_floats(bin, t.data);
  if (bin.peek() != std::char_traits<char>::eof()) throw Error("checkpoint blob has trailing bytes");
  if (j.contains("optimizer_blob")) {
    std::ifstream opt(dir / j["optimizer_blob"].get<std::string>(), std::ios::binary);
    if (!opt) throw Error("cannot open optimizer blob for " + manifest.string());
    std::vector<std::vector<float>> acc;
    for (const auto& t : ck.params.tensors) {
      acc.emplace_back(t.size());
      detail::read_floats(opt, acc.back());
    }
    ck.accumulators = std::move(acc);
  }
  return ck;
}

}  // namespace gridlab
