#include "fluoro/ttg1.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "fluoro/error.hpp"

namespace fluoro {
namespace {

constexpr std::array<char, 4> kMagic{'T', 'T', 'G', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
}

void put_u64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

// Reads up to n bytes; returns the count actually read.
std::size_t read_some(std::istream& in, unsigned char* buf, std::size_t n) {
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

}  // namespace

void write_ttg1(std::ostream& out, std::span<const TimetagRecord> stream) {
  std::array<unsigned char, kTtg1HeaderSize> header{};
  std::memcpy(header.data(), kMagic.data(), 4);
  put_u16(header.data() + 4, kVersion);
  put_u16(header.data() + 6, 0);
  put_u64(header.data() + 8, 1);
  out.write(reinterpret_cast<const char*>(header.data()), header.size());

  constexpr std::size_t kChunk = 4096;
  std::vector<unsigned char> buf(kChunk * kTtg1RecordSize);
  std::uint64_t prev = 0;
  for (std::size_t base = 0; base < stream.size(); base += kChunk) {
    const std::size_t n = std::min(kChunk, stream.size() - base);
    std::fill(buf.begin(), buf.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rec = stream[base + i];
      if (rec.channel > 1) throw DomainError("TTG1 channel must be 0 or 1");
      if (base + i > 0 && rec.time_ps < prev) throw DomainError("TTG1 records must be sorted by time");
      prev = rec.time_ps;
      unsigned char* p = buf.data() + i * kTtg1RecordSize;
      put_u64(p, rec.time_ps);
      p[8] = rec.channel;
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * kTtg1RecordSize));
  }
  if (!out) throw IoError("TTG1 write failed");
}

void write_ttg1_file(const std::filesystem::path& path, std::span<const TimetagRecord> stream) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_ttg1(out, stream);
}

TimetagStream read_ttg1(std::istream& in) {
  std::array<unsigned char, kTtg1HeaderSize> header{};
  const std::size_t got = read_some(in, header.data(), header.size());
  if (got < 4 || std::memcmp(header.data(), kMagic.data(), 4) != 0) {
    if (got < 4) throw FormatError("TTG1 header truncated", got);
    throw FormatError("bad TTG1 magic", 0);
  }
  if (got < header.size()) throw FormatError("TTG1 header truncated", got);
  if (get_u16(header.data() + 4) != kVersion) {
    throw FormatError("unsupported TTG1 version " + std::to_string(get_u16(header.data() + 4)), 4);
  }
  if (get_u16(header.data() + 6) != 0) throw FormatError("TTG1 reserved header field is nonzero", 6);
  const std::uint64_t resolution = get_u64(header.data() + 8);
  if (resolution == 0) throw FormatError("TTG1 resolution must be >= 1 ps", 8);

  TimetagStream out;
  constexpr std::size_t kChunk = 4096;
  std::vector<unsigned char> buf(kChunk * kTtg1RecordSize);
  std::uint64_t offset = kTtg1HeaderSize;
  std::uint64_t prev = 0;
  for (;;) {
    const std::size_t n = read_some(in, buf.data(), buf.size());
    const std::size_t whole = n / kTtg1RecordSize;
    for (std::size_t i = 0; i < whole; ++i, offset += kTtg1RecordSize) {
      const unsigned char* p = buf.data() + i * kTtg1RecordSize;
      const std::uint64_t ticks = get_u64(p);
      if (resolution > 1 && ticks > UINT64_MAX / resolution) throw FormatError("TTG1 time overflows 64-bit ps", offset);
      const std::uint64_t t = ticks * resolution;
      if (p[8] > 1) throw FormatError("TTG1 channel " + std::to_string(p[8]) + " is not 0 or 1", offset + 8);
      for (std::size_t b = 9; b < kTtg1RecordSize; ++b) {
        if (p[b] != 0) throw FormatError("TTG1 reserved record byte is nonzero", offset + b);
      }
      if (!out.empty() && t < prev) throw FormatError("TTG1 records are not sorted by time", offset);
      prev = t;
      out.push_back({t, p[8]});
    }
    if (n % kTtg1RecordSize != 0) throw FormatError("TTG1 record truncated", offset);
    if (n < buf.size()) break;
  }
  return out;
}

TimetagStream read_ttg1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ttg1(in);
}

}  // namespace fluoro
