#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "spoofbench/wav.hpp"

using namespace spoofbench;
using Catch::Approx;

namespace {

std::string temp_path(const char* name) {
  return std::string("wavtest_") + name;
}

}  // namespace

TEST_CASE("PCM16 mono round trip at 16 kHz") {
  Waveform w;
  w.sample_rate = 16000;
  for (int i = 0; i < 1600; ++i)
    w.samples.push_back(
        0.5f * std::sin(2.0 * M_PI * 440.0 * i / 16000.0));
  const std::string path = temp_path("roundtrip.wav");
  write_wav(path, w);
  Waveform r = load_wav(path);
  REQUIRE(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < r.samples.size(); ++i)
    REQUIRE(r.samples[i] == Approx(w.samples[i]).margin(1.0 / 32768.0));
  std::remove(path.c_str());
}

TEST_CASE("a 32 kHz file resamples to about half the samples") {
  // hand-write a 32 kHz PCM16 file
  const std::string path = temp_path("32k.wav");
  {
    Waveform w;
    w.sample_rate = 32000;
    w.samples.assign(3200, 0.25f);
    write_wav(path, w);
  }
  Waveform r = load_wav(path);
  REQUIRE(r.sample_rate == 16000);
  REQUIRE(std::abs(static_cast<long>(r.samples.size()) - 1600) <= 2);
  for (float s : r.samples) REQUIRE(s == Approx(0.25f).margin(1e-3));
  std::remove(path.c_str());
}

TEST_CASE("opposite stereo channels cancel to silence") {
  // stereo PCM16 writer inline (the library writer is mono-only)
  const std::string path = temp_path("stereo.wav");
  {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    const int n = 800;
    os.write("RIFF", 4);
    u32(36 + n * 4);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(16000);
    u32(16000 * 4);
    u16(4);
    u16(16);
    os.write("data", 4);
    u32(n * 4);
    for (int i = 0; i < n; ++i) {
      int16_t v = static_cast<int16_t>(
          20000 * std::sin(2.0 * M_PI * 300.0 * i / 16000.0));
      u16(static_cast<uint16_t>(v));
      u16(static_cast<uint16_t>(static_cast<int16_t>(-v)));
    }
  }
  Waveform r = load_wav(path);
  for (float s : r.samples) REQUIRE(std::abs(s) <= 1.0f / 32768.0f);
  std::remove(path.c_str());
}

TEST_CASE("unsupported codec is reported") {
  const std::string path = temp_path("alaw.wav");
  {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    os.write("RIFF", 4);
    u32(36 + 8);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(6);  // A-law
    u16(1);
    u32(16000);
    u32(16000);
    u16(1);
    u16(8);
    os.write("data", 4);
    u32(8);
    for (int i = 0; i < 8; ++i) os.put(0);
  }
  REQUIRE_THROWS_WITH(load_wav(path),
                      Catch::Matchers::ContainsSubstring("unsupported codec"));
  std::remove(path.c_str());
}

TEST_CASE("malformed and empty files are rejected") {
  const std::string path = temp_path("bad.wav");
  {
    std::ofstream os(path, std::ios::binary);
    os.write("NOPE", 4);
  }
  REQUIRE_THROWS_AS(load_wav(path), Error);
  std::remove(path.c_str());
  REQUIRE_THROWS_AS(load_wav("does_not_exist.wav"), Error);
}

TEST_CASE("IEEE float32 data is accepted") {
  const std::string path = temp_path("f32.wav");
  {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    const int n = 100;
    os.write("RIFF", 4);
    u32(36 + n * 4);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(3);  // IEEE float
    u16(1);
    u32(16000);
    u32(16000 * 4);
    u16(4);
    u16(32);
    os.write("data", 4);
    u32(n * 4);
    for (int i = 0; i < n; ++i) {
      float v = 0.125f;
      os.write(reinterpret_cast<char*>(&v), 4);
    }
  }
  Waveform r = load_wav(path);
  REQUIRE(r.samples.size() == 100);
  REQUIRE(r.samples[50] == Approx(0.125f));
  std::remove(path.c_str());
}
