#include "radattr/spectrum.hpp"
#include "radattr/types.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace radattr;

TEST(Types, ParsesNamesAndRejectsUnknown) {
  EXPECT_EQ(parse_object_class("car"), ObjectClass::Car);
  EXPECT_EQ(parse_object_class("person"), ObjectClass::Person);
  EXPECT_EQ(parse_sensor("lidar"), SensorKind::Lidar);
  EXPECT_EQ(parse_pose_mode("ins"), PoseMode::Ins);
  EXPECT_THROW(parse_object_class("boat"), ValidationError);
  EXPECT_THROW(parse_sensor("radar"), ValidationError);
  EXPECT_THROW(parse_pose_mode("gps"), ValidationError);
  for (auto c : {ObjectClass::Person, ObjectClass::Car, ObjectClass::Truck, ObjectClass::Motorcycle, ObjectClass::Bus}) {
    EXPECT_EQ(parse_object_class(to_string(c)), c);
  }
}

TEST(Types, WrapAngleStaysInHalfOpenInterval) {
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(0.5), 0.5, 1e-15);
  EXPECT_NEAR(wrap_angle(-0.5 - 4 * kPi), -0.5, 1e-12);
}

TEST(Types, VehicleClasses) {
  EXPECT_TRUE(is_vehicle(ObjectClass::Car));
  EXPECT_TRUE(is_vehicle(ObjectClass::Bus));
  EXPECT_FALSE(is_vehicle(ObjectClass::Person));
  EXPECT_DOUBLE_EQ(nominal_height(ObjectClass::Car), 1.43);
}

TEST(Spectrum, DeltaAt662IsInsideRoi) {
  const Roi roi = cs137_roi();
  Spectrum s(kNumChannels, 0);
  const int c = static_cast<int>(662.0 / kChannelWidthKev);
  s[c] = 1234;
  EXPECT_EQ(roi_counts(s, roi), 1234);
}

TEST(Spectrum, FlatSpectrumCountsRoiChannels) {
  // Channels overlapping [600, 725] keV on a 3000/128 keV grid.
  const double w = 3000.0 / 128.0;
  const int first = static_cast<int>(std::floor(600.0 / w));
  const int last = static_cast<int>(std::ceil(725.0 / w)) - 1;
  const Roi roi = cs137_roi();
  EXPECT_EQ(roi.first_channel, first);
  EXPECT_EQ(roi.last_channel, last);
  Spectrum s(kNumChannels, 1);
  EXPECT_EQ(roi_counts(s, roi), last - first + 1);
}

TEST(Spectrum, EmptySpectrumIsZero) {
  Spectrum s(kNumChannels, 0);
  EXPECT_EQ(roi_counts(s, cs137_roi()), 0);
}

TEST(Spectrum, RoiLookup) {
  EXPECT_EQ(roi_by_id("cs137").first_channel, cs137_roi().first_channel);
  EXPECT_THROW(roi_by_id("xx999"), ValidationError);
  EXPECT_NEAR(channel_center_kev(0), 0.5 * kChannelWidthKev, 1e-12);
}
