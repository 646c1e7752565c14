// lyrec/harness/config.cc
//
// Copyright 2026 The lyrec authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <sstream>

#include "lyrec/harness.h"
#include "lyrec/io.h"

namespace lyrec {
namespace harness {

Config Config::FromFile(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return FromString(buffer.str());
}

Config Config::FromString(const std::string &text) {
  Config cfg;
  for (const auto &[key, value] : ParseKeyValueLines(text)) {
    cfg.entries_[key] = value;
  }
  return cfg;
}

void Config::Set(const std::string &key, const std::string &value) {
  entries_[key] = value;
}

void Config::Merge(const Config &overrides) {
  for (const auto &[key, value] : overrides.entries_) {
    entries_[key] = value;
  }
}

bool Config::Has(const std::string &key) const {
  return entries_.count(key) > 0;
}

std::string Config::GetString(const std::string &key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw DataError("missing required config key '" + key + "'");
  }
  return it->second;
}

std::string Config::GetString(const std::string &key,
                              const std::string &fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

long Config::GetInt(const std::string &key, long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (const std::exception &) {
    throw DataError("config key '" + key + "' is not an integer: " +
                    it->second);
  }
}

double Config::GetDouble(const std::string &key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception &) {
    throw DataError("config key '" + key + "' is not a number: " +
                    it->second);
  }
}

bool Config::GetBool(const std::string &key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw DataError("config key '" + key + "' is not a boolean: " + it->second);
}

std::string Config::Serialize() const {
  std::string out;
  for (const auto &[key, value] : entries_) {
    out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace harness
}  // namespace lyrec
