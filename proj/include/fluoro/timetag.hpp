#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fluoro {

struct TimetagRecord {
  std::uint64_t time_ps = 0;
  std::uint8_t channel = 0;

  friend bool operator==(const TimetagRecord&, const TimetagRecord&) = default;
};

// Detection events sorted by time (ties allowed), channel 0 or 1.
using TimetagStream = std::vector<TimetagRecord>;

bool is_sorted_by_time(std::span<const TimetagRecord> stream);
std::vector<std::uint64_t> channel_times(std::span<const TimetagRecord> stream, std::uint8_t channel);
std::vector<std::uint64_t> all_times(std::span<const TimetagRecord> stream);
// Stable merge of two sorted single-channel streams; channel fields are rewritten to 0 and 1.
TimetagStream merge_channels(std::span<const TimetagRecord> ch0, std::span<const TimetagRecord> ch1);

}  // namespace fluoro
