#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "moeplan/perf_model.hpp"

namespace moeplan {

// Measured kernel and network profiles. CSV rows:
//   attention,<batch>,<seconds>[,<seq_len>]
//   expert,<batch>,<seconds>
//   util,<message_bytes>,<utilization>
// An optional header line starting with "kind" is ignored.
struct Profile {
  std::vector<ProfilePoint> attention;
  std::vector<ProfilePoint> expert;
  std::vector<std::pair<double, double>> util;

  bool empty() const { return attention.empty() && expert.empty() && util.empty(); }
};

Profile read_profile(std::istream& in, std::string_view origin = "<profile>");
Profile load_profile(const std::filesystem::path& path);

struct ProfileCalibration {
  std::optional<AttentionFit> attention;
  std::optional<AffineFit> expert;
  std::optional<UtilCurve> util;
};

// Fits whatever sections the profile contains.
ProfileCalibration calibrate_profile(const Profile& profile);

// Cost model from a profile with both attention and expert sections; throws
// CalibrationError otherwise. The util curve falls back to `default_util`.
CostModel cost_model_from_profile(const Profile& profile, std::int64_t seq_len,
                                  UtilCurve default_util = {},
                                  CommBackend backend = CommBackend::m2n());

}  // namespace moeplan
