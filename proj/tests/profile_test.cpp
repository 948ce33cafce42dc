#include <doctest.h>

#include <sstream>

#include "moeplan/error.hpp"
#include "moeplan/profile.hpp"

using namespace moeplan;

namespace {

Profile parse(const std::string& text) {
  std::istringstream in(text);
  return read_profile(in, "prof.csv");
}

}  // namespace

TEST_CASE("read_profile sections") {
  const Profile p = parse(
      "kind,x,y,seq_len\n"
      "# comment\n"
      "attention, 64, 0.001, 730\n"
      "attn,128,0.0015\n"
      "\n"
      "expert,256,0.002\n"
      "FFN,512,0.003\n"
      "util,1024,0.2\n"
      "util,1048576,0.9\n");
  REQUIRE(p.attention.size() == 2);
  CHECK(p.attention[0].batch == 64);
  CHECK(p.attention[0].seq_len == 730);
  CHECK(p.attention[1].seq_len == 0);
  CHECK(p.expert.size() == 2);
  CHECK(p.util.size() == 2);
  CHECK_FALSE(p.empty());
  CHECK(parse("").empty());
}

TEST_CASE("read_profile errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse("attention,1\n"), doctest::Contains("prof.csv:1:"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("expert,1,2\nbogus,1,2\n"), doctest::Contains("prof.csv:2:"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("expert,1,fast\n"), doctest::Contains("seconds"), ConfigError);
  CHECK_THROWS_AS(parse("expert,1,2,3\n"), ConfigError);
  CHECK_THROWS_AS(parse("attention,-1,2\n"), ConfigError);
  CHECK_THROWS_AS(parse("attention,1,2,3,4\n"), ConfigError);
}

TEST_CASE("calibrate_profile recovers affine data") {
  std::ostringstream text;
  for (int b = 32; b <= 512; b += 32) {
    text << "attention," << b << ',' << (2e-7 * 730 + 1e-6) * b + 3e-5 << ",730\n";
    text << "attention," << b << ',' << (2e-7 * 1460 + 1e-6) * b + 3e-5 << ",1460\n";
    text << "expert," << b << ',' << 4e-6 * b + 1e-4 << '\n';
  }
  const Profile p = parse(text.str());
  const ProfileCalibration cal = calibrate_profile(p);
  REQUIRE(cal.attention);
  REQUIRE(cal.expert);
  CHECK_FALSE(cal.util);
  CHECK(cal.attention->coeffs.per_seq_token == doctest::Approx(2e-7).epsilon(1e-9));
  CHECK(cal.attention->coeffs.per_token == doctest::Approx(1e-6).epsilon(1e-6));
  CHECK(cal.attention->coeffs.fixed == doctest::Approx(3e-5).epsilon(1e-6));
  CHECK(cal.expert->slope == doctest::Approx(4e-6).epsilon(1e-9));
  CHECK(cal.expert->intercept == doctest::Approx(1e-4).epsilon(1e-9));

  const CostModel cm = cost_model_from_profile(p, 1000, UtilCurve::ideal(), CommBackend::nccl());
  CHECK(cm.k1() == doctest::Approx(2e-7 * 1000 + 1e-6));
  CHECK(cm.k3() == doctest::Approx(4e-6));
  CHECK(cm.util == UtilCurve::ideal());
  CHECK(cm.backend == CommBackend::nccl());
}

TEST_CASE("profile util section overrides the default curve") {
  const Profile p = parse("attention,1,1\nattention,2,2\nexpert,1,1\nexpert,2,2\nutil,10,0.5\nutil,100,1\n");
  const CostModel cm = cost_model_from_profile(p, 730);
  CHECK(cm.util.is_table());
  CHECK(cm.util(55) == doctest::Approx(0.75));
}

TEST_CASE("negative intercepts are refit through the origin") {
  const Profile p = parse("expert,100,0.0009\nexpert,200,0.0021\nexpert,300,0.0030\n");
  const ProfileCalibration cal = calibrate_profile(p);
  REQUIRE(cal.expert);
  CHECK(cal.expert->intercept == 0.0);
  CHECK(cal.expert->slope > 0.0);
}

TEST_CASE("cost_model_from_profile needs both kernels") {
  CHECK_THROWS_AS(cost_model_from_profile(parse("expert,1,1\nexpert,2,2\n"), 730), CalibrationError);
  CHECK_THROWS_AS(cost_model_from_profile(parse("attention,1,1\nattention,2,2\n"), 730), CalibrationError);
  CHECK_THROWS_AS(calibrate_profile(parse("expert,5,1\nexpert,5,2\n")), CalibrationError);
  CHECK_THROWS_AS(calibrate_profile(parse("util,10,0.5\nutil,5,0.6\n")), ConfigError);
}

TEST_CASE("load_profile missing file") {
  CHECK_THROWS_AS(load_profile("/nonexistent/profile.csv"), ConfigError);
}
