// lyrec/audio.cc
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

#include "lyrec/audio.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "lyrec/common.h"
#include "lyrec/io.h"

namespace lyrec {
namespace corpus {

double AudioSegment::DurationSeconds() const {
  return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                         : 0.0;
}

double AudioSegment::Power() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

double AudioSegment::Peak() const {
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::fabs(s));
  return peak;
}

void AudioSegment::Validate() const {
  if (samples.empty()) throw DataError("audio segment '" + id + "' is empty");
  if (sample_rate <= 0) {
    throw DataError("audio segment '" + id + "' has non-positive sample rate");
  }
  for (double s : samples) {
    if (!std::isfinite(s)) {
      throw DataError("audio segment '" + id + "' contains non-finite sample");
    }
  }
}

namespace {

constexpr uint16_t kPcmFormat = 1;

// Scale matches the reader (v / 32768), so quantize -> write -> read is
// the identity on the int16 grid.
int16_t SampleToInt16(double s) {
  double scaled = std::round(s * 32768.0);
  scaled = std::max(-32768.0, std::min(32767.0, scaled));
  return static_cast<int16_t>(scaled);
}

}  // namespace

AudioSegment ReadWav(const std::string &path, const std::string &id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open wav file " + path);

  char tag[4];
  ReadBytes(is, tag, 4, "RIFF tag of " + path);
  if (std::memcmp(tag, "RIFF", 4) != 0) {
    throw FormatError("not a RIFF file: " + path);
  }
  ReadU32(is, "RIFF size");
  ReadBytes(is, tag, 4, "WAVE tag of " + path);
  if (std::memcmp(tag, "WAVE", 4) != 0) {
    throw FormatError("not a WAVE file: " + path);
  }

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  AudioSegment out;
  out.id = id.empty() ? path : id;

  // Walk chunks; accept fmt + data, skip the rest.
  while (true) {
    is.read(tag, 4);
    if (is.gcount() == 0) break;  // clean EOF after last chunk
    if (is.gcount() != 4) throw FormatError("truncated chunk header: " + path);
    uint32_t chunk_size = ReadU32(is, "chunk size of " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("fmt chunk too small: " + path);
      uint16_t format = ReadU16(is, "fmt.format");
      channels = ReadU16(is, "fmt.channels");
      rate = ReadU32(is, "fmt.rate");
      ReadU32(is, "fmt.byte_rate");
      ReadU16(is, "fmt.block_align");
      bits = ReadU16(is, "fmt.bits");
      if (format != kPcmFormat) {
        throw FormatError("unsupported wav encoding (want PCM): " + path);
      }
      is.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk: " + path);
      if (channels != 1) {
        throw FormatError("unsupported channel count (want mono): " + path);
      }
      if (bits != 16) {
        throw FormatError("unsupported sample width (want 16-bit): " + path);
      }
      size_t n = chunk_size / 2;
      out.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        uint16_t raw = ReadU16(is, "wav sample");
        int16_t v;
        std::memcpy(&v, &raw, 2);
        out.samples[i] = static_cast<double>(v) / 32768.0;
      }
      out.sample_rate = static_cast<int>(rate);
      return out;
    } else {
      // Pad byte on odd-sized chunks per RIFF.
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
      if (!is) throw FormatError("truncated chunk body: " + path);
    }
  }
  throw FormatError("wav file has no data chunk: " + path);
}

void WriteWav(const std::string &path, const AudioSegment &audio) {
  audio.Validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");

  uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  uint32_t rate = static_cast<uint32_t>(audio.sample_rate);

  WriteBytes(os, "RIFF", 4);
  WriteU32(os, 36 + data_bytes);
  WriteBytes(os, "WAVE", 4);
  WriteBytes(os, "fmt ", 4);
  WriteU32(os, 16);
  WriteU16(os, kPcmFormat);
  WriteU16(os, 1);  // mono
  WriteU32(os, rate);
  WriteU32(os, rate * 2);  // byte rate
  WriteU16(os, 2);         // block align
  WriteU16(os, 16);        // bits per sample
  WriteBytes(os, "data", 4);
  WriteU32(os, data_bytes);
  for (double s : audio.samples) {
    int16_t v = SampleToInt16(s);
    uint16_t raw;
    std::memcpy(&raw, &v, 2);
    WriteU16(os, raw);
  }
}

void QuantizeToInt16Grid(AudioSegment *audio) {
  for (double &s : audio->samples) {
    s = static_cast<double>(SampleToInt16(s)) / 32768.0;
  }
}

}  // namespace corpus
}  // namespace lyrec
