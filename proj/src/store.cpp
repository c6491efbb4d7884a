// Copyright 2026 The GRACE Authors
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

#include "grace/store.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "grace/error.hpp"

namespace grace {
namespace {

void put_u32_le(std::ostream &os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32_le(std::istream &is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char *>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

// The data payload is written directly from the float array; this project
// only targets little-endian IEEE-754 hosts.
static_assert(sizeof(float) == 4);

} // namespace

void write_tensor(const DiffTensor &tensor, const std::filesystem::path &path) {
  tensor.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw PersistenceError("cannot open " + path.string() + " for writing");
  os.write(kTensorMagic, 4);
  put_u32_le(os, kTensorFormatVersion);
  put_u32_le(os, static_cast<std::uint32_t>(tensor.layers));
  put_u32_le(os, static_cast<std::uint32_t>(tensor.prompt_pairs));
  put_u32_le(os, static_cast<std::uint32_t>(tensor.questions));
  put_u32_le(os, static_cast<std::uint32_t>(tensor.dim));
  os.write(reinterpret_cast<const char *>(tensor.data.data()),
           static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  os.flush();
  if (!os)
    throw PersistenceError("write failed for " + path.string());
}

DiffTensor read_tensor(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw PersistenceError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw FormatError("bad magic in " + path.string());
  std::uint32_t version = get_u32_le(is);
  if (version != kTensorFormatVersion)
    throw FormatError("unsupported tensor format version " +
                      std::to_string(version) + " in " + path.string());
  DiffTensor t;
  t.layers = get_u32_le(is);
  t.prompt_pairs = get_u32_le(is);
  t.questions = get_u32_le(is);
  t.dim = get_u32_le(is);
  if (!is)
    throw CorruptionError("truncated header in " + path.string());
  if (t.layers == 0 || t.prompt_pairs == 0 || t.questions == 0 || t.dim == 0)
    throw ValidationError("tensor in " + path.string() +
                          " declares a zero dimension");
  t.data.resize(t.value_count());
  is.read(reinterpret_cast<char *>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != t.data.size() * sizeof(float))
    throw CorruptionError("truncated data in " + path.string() + ": expected " +
                          std::to_string(t.data.size()) + " values");
  // Trailing bytes mean the header does not describe the file.
  is.peek();
  if (!is.eof())
    throw CorruptionError("trailing bytes after declared data in " +
                          path.string());
  t.validate();
  return t;
}

ConceptDataset validate_dataset(const std::filesystem::path &manifest_path) {
  std::ifstream is(manifest_path);
  if (!is)
    throw PersistenceError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("manifest " + manifest_path.string() +
                      " is not valid JSON: " + e.what());
  }
  if (!j.contains("concept_name") || !j.contains("model_name") ||
      !j.contains("variants"))
    throw ValidationError("manifest " + manifest_path.string() +
                          " must contain concept_name, model_name, variants");

  ConceptDataset ds;
  ds.concept_name = j.at("concept_name").get<std::string>();
  ds.model_name = j.at("model_name").get<std::string>();
  ds.notes = j.value("notes", std::string());
  ds.manifest_path = manifest_path;
  if (ds.concept_name.empty())
    throw ValidationError("manifest " + manifest_path.string() +
                          " has empty concept_name");

  const auto base = manifest_path.parent_path();
  for (const auto &[key, value] : j.at("variants").items()) {
    auto v = variant_from_name(key);
    if (!v)
      throw ValidationError("manifest declares unknown variant '" + key + "'");
    auto rel = value.get<std::string>();
    ds.tensors[*v] = read_tensor(base / rel);
  }
  if (ds.tensors.empty())
    throw ValidationError("manifest " + manifest_path.string() +
                          " declares no variants");

  if (ds.tensors.size() == 2) {
    const auto &a = ds.tensors.at(Variant::prompt_boundary);
    const auto &b = ds.tensors.at(Variant::response_avg);
    if (a.layers != b.layers || a.prompt_pairs != b.prompt_pairs ||
        a.questions != b.questions || a.dim != b.dim)
      throw ValidationError(
          "variant shape mismatch: prompt_boundary (L=" +
          std::to_string(a.layers) + ",P=" + std::to_string(a.prompt_pairs) +
          ",Q=" + std::to_string(a.questions) + ",D=" + std::to_string(a.dim) +
          ") vs response_avg (L=" + std::to_string(b.layers) + ",P=" +
          std::to_string(b.prompt_pairs) + ",Q=" + std::to_string(b.questions) +
          ",D=" + std::to_string(b.dim) + ")");
  }
  return ds;
}

std::filesystem::path save_dataset(const ConceptDataset &dataset,
                                   const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json variants = nlohmann::json::object();
  for (const auto &[v, tensor] : dataset.tensors) {
    std::string file = std::string(variant_name(v)) + ".grat";
    write_tensor(tensor, dir / file);
    variants[variant_name(v)] = file;
  }
  nlohmann::json j{{"concept_name", dataset.concept_name},
                   {"model_name", dataset.model_name},
                   {"variants", variants}};
  if (!dataset.notes.empty())
    j["notes"] = dataset.notes;
  auto manifest = dir / "manifest.json";
  std::ofstream os(manifest, std::ios::trunc);
  if (!os)
    throw PersistenceError("cannot write " + manifest.string());
  os << j.dump(2) << "\n";
  return manifest;
}

} // namespace grace
