#include <gtest/gtest.h>

#include "racelab/config.hpp"

using namespace racelab;

TEST(RunConfig, DefaultsMatchDeskFile) {
  const RunConfig file = load_run_config(RACELAB_DESK_CFG);
  EXPECT_EQ(file.format(), RunConfig{}.format());
  EXPECT_NO_THROW(file.validate());
}

TEST(RunConfig, ParsesKeysCommentsAndLists) {
  const RunConfig c = parse_run_config(
      "# header\n"
      "track = B  # trailing comment\n"
      "mode=throttle\n"
      "\n"
      "speeds = 10, 25.5,40\n"
      "sweep_laps = 1,3\n"
      "augment = off\n"
      "cameras = center\n"
      "seed = 18446744073709551615\n");
  EXPECT_EQ(c.track, "B");
  EXPECT_EQ(c.mode, "throttle");
  EXPECT_EQ(c.speeds, (std::vector<double>{10, 25.5, 40}));
  EXPECT_EQ(c.sweep_laps, (std::vector<int>{1, 3}));
  EXPECT_FALSE(c.augment);
  EXPECT_EQ(c.cameras, CameraSelection::Center);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  EXPECT_FALSE(c.drive_mode().is_fixed());
}

TEST(RunConfig, ErrorsCarryLineNumbers) {
  try {
    parse_run_config("track = A\n\nbogus = 1\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "x.cfg:3: unknown key 'bogus'");
  }
  EXPECT_THROW(parse_run_config("laps 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("laps = three\n"), ConfigError);
  EXPECT_THROW(parse_run_config("speed_mph = 5x\n"), ConfigError);
  EXPECT_THROW(parse_run_config("mode = turbo\n"), ConfigError);
  EXPECT_THROW(parse_run_config("speeds = 20,10\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("augment = maybe\n"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/desk.cfg"), ConfigError);
}

TEST(RunConfig, ValidateRanges) {
  RunConfig c;
  c.laps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.high_speed_mph = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.port = 70000;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, FormatRoundTrips) {
  RunConfig c;
  c.set("lr", "0.00025");
  c.set("speed_mph", "37.5");
  c.set("schedule", "1,5,9");
  c.set("out", "elsewhere");
  const RunConfig back = parse_run_config(c.format());
  EXPECT_EQ(back.format(), c.format());
  EXPECT_EQ(back.lr, 0.00025);
  EXPECT_EQ(back.schedule, (std::vector<int>{1, 5, 9}));
  for (const std::string& k : RunConfig::keys()) EXPECT_NE(c.format().find(k + " = "), std::string::npos) << k;
}

TEST(RunConfig, TrainConfigAndMode) {
  RunConfig c;
  c.set("epochs", "7");
  c.set("batch", "32");
  c.set("seed", "9");
  c.set("augment", "off");
  const TrainConfig t = c.train_config();
  EXPECT_EQ(t.epochs, 7);
  EXPECT_EQ(t.batch_size, 32);
  EXPECT_EQ(t.seed, 9u);
  EXPECT_FALSE(t.augment);
  EXPECT_EQ(t.lr, 1e-4);
  const DriveMode m = c.drive_mode();
  EXPECT_TRUE(m.is_fixed());
  EXPECT_DOUBLE_EQ(m.speed, mph_to_mps(50.0));
}

TEST(Lists, Parse) {
  EXPECT_EQ(parse_double_list("1.5,2"), (std::vector<double>{1.5, 2}));
  EXPECT_EQ(parse_int_list(" 4 , 8 "), (std::vector<int>{4, 8}));
  EXPECT_THROW(parse_int_list("1,,2"), ConfigError);
  EXPECT_THROW(parse_int_list("1.5"), ConfigError);
}
