#include "moeplan/profile.hpp"

#include <fstream>

#include <fmt/format.h>

#include "moeplan/csv.hpp"
#include "moeplan/error.hpp"

namespace moeplan {

Profile read_profile(std::istream& in, std::string_view origin) {
  Profile p;
  csv::for_each_row(in, "kind", [&](const std::vector<std::string>& f, int line) {
    if (f.size() < 3) {
      throw ConfigError(fmt::format("{}:{}: expected kind,x,y[,seq_len], got {} fields", origin, line, f.size()));
    }
    const std::string kind = normalize_name(f[0]);
    if (kind == "attention" || kind == "attn") {
      if (f.size() > 4) throw ConfigError(fmt::format("{}:{}: too many fields", origin, line));
      ProfilePoint pt{csv::parse_double(f[1], origin, line, "batch"),
                      csv::parse_double(f[2], origin, line, "seconds"), 0};
      if (f.size() == 4) pt.seq_len = csv::parse_int(f[3], origin, line, "seq_len");
      if (pt.batch < 0 || pt.seconds < 0 || pt.seq_len < 0) {
        throw ConfigError(fmt::format("{}:{}: values must be non-negative", origin, line));
      }
      p.attention.push_back(pt);
    } else if (kind == "expert" || kind == "ffn") {
      if (f.size() != 3) throw ConfigError(fmt::format("{}:{}: expert rows have 3 fields", origin, line));
      ProfilePoint pt{csv::parse_double(f[1], origin, line, "batch"),
                      csv::parse_double(f[2], origin, line, "seconds"), 0};
      if (pt.batch < 0 || pt.seconds < 0) {
        throw ConfigError(fmt::format("{}:{}: values must be non-negative", origin, line));
      }
      p.expert.push_back(pt);
    } else if (kind == "util") {
      if (f.size() != 3) throw ConfigError(fmt::format("{}:{}: util rows have 3 fields", origin, line));
      p.util.emplace_back(csv::parse_double(f[1], origin, line, "message_bytes"),
                          csv::parse_double(f[2], origin, line, "utilization"));
    } else {
      throw ConfigError(fmt::format("{}:{}: unknown row kind '{}' (expected attention, expert or util)",
                                    origin, line, f[0]));
    }
  });
  return p;
}

Profile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open profile '{}'", path.string()));
  return read_profile(in, path.string());
}

ProfileCalibration calibrate_profile(const Profile& profile) {
  ProfileCalibration out;
  if (!profile.attention.empty()) out.attention = calibrate_attention(profile.attention);
  if (!profile.expert.empty()) out.expert = calibrate(profile.expert, {.nonnegative_intercept = true});
  if (!profile.util.empty()) out.util = UtilCurve::table(profile.util);
  return out;
}

CostModel cost_model_from_profile(const Profile& profile, std::int64_t seq_len, UtilCurve default_util,
                                  CommBackend backend) {
  if (profile.attention.empty() || profile.expert.empty()) {
    throw CalibrationError("profile needs both attention and expert rows to build a cost model");
  }
  const ProfileCalibration cal = calibrate_profile(profile);
  CostModel cm;
  cm.attention = cal.attention->coeffs;
  cm.expert_slope = cal.expert->slope;
  cm.expert_fixed = cal.expert->intercept;
  cm.seq_len = seq_len;
  cm.util = cal.util ? *cal.util : std::move(default_util);
  cm.backend = std::move(backend);
  cm.validate();
  return cm;
}

}  // namespace moeplan
