#pragma once

// TTG1 timetag files.
//
//   header  16 bytes: "TTG1", u16 version = 1, u16 reserved = 0, u64 resolution_ps
//   record  16 bytes: u64 time (resolution units), u8 channel, 7 zero bytes
//
// All integers little-endian. Records are sorted by time; channel is 0 or 1.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>

#include "fluoro/timetag.hpp"

namespace fluoro {

inline constexpr std::size_t kTtg1HeaderSize = 16;
inline constexpr std::size_t kTtg1RecordSize = 16;

void write_ttg1(std::ostream& out, std::span<const TimetagRecord> stream);
void write_ttg1_file(const std::filesystem::path& path, std::span<const TimetagRecord> stream);

// Throws FormatError carrying the byte offset of the first violation. Times are
// returned in picoseconds regardless of the stored resolution.
TimetagStream read_ttg1(std::istream& in);
TimetagStream read_ttg1_file(const std::filesystem::path& path);

}  // namespace fluoro
