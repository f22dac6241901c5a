#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

#include "pamsim/dataset.hpp"

namespace pamsim::dataset {
namespace {

namespace fs = std::filesystem;

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pamsim_dataset_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

Record random_record(std::mt19937_64& rng, std::uint64_t ts) {
  Record r;
  r.timestamp_ns = ts;
  auto fill = [&](auto& a) {
    for (float& v : a) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
  };
  fill(r.pressure_obs);
  fill(r.pressure_des);
  fill(r.joint_pos);
  fill(r.joint_vel);
  return r;
}

std::vector<Record> monotone_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<Record> out;
  std::uint64_t ts = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ts += 1 + rng() % 5'000'000;
    out.push_back(random_record(rng, ts));
  }
  return out;
}

TEST_F(DatasetTest, EmptyFileIsHeaderOnly) {
  write(path("e.pamd"), {});
  EXPECT_EQ(fs::file_size(path("e.pamd")), 16u);
  const Contents c = read(path("e.pamd"));
  EXPECT_TRUE(c.records.empty());
  EXPECT_EQ(c.header, Header{});
  EXPECT_FALSE(c.truncated);
  EXPECT_FALSE(c.aborted);
}

TEST_F(DatasetTest, ThousandRecordsSize) {
  std::mt19937_64 rng(5);
  const auto recs = monotone_records(rng, 1000);
  write(path("k.pamd"), recs);
  EXPECT_EQ(fs::file_size(path("k.pamd")), 104016u);
  EXPECT_EQ(read(path("k.pamd")).records, recs);
}

TEST_F(DatasetTest, HeaderLayout) {
  const auto h = encode_header(Header{});
  EXPECT_EQ(h[0], std::byte{0x44});
  EXPECT_EQ(h[3], std::byte{0x50});
  EXPECT_EQ(decode_header(h), Header{});
}

TEST_F(DatasetTest, CorruptMagicIsFormatError) {
  write(path("c.pamd"), {});
  auto bytes = read_bytes(path("c.pamd"));
  bytes[3] = std::byte{0x00};
  try {
    decode(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST_F(DatasetTest, ShortHeaderIsFormatError) {
  const std::vector<std::byte> bytes(10);
  EXPECT_THROW(decode(bytes), Error);
}

TEST_F(DatasetTest, TruncatedTailWarns) {
  std::mt19937_64 rng(6);
  const auto recs = monotone_records(rng, 5);
  write(path("t.pamd"), recs);
  fs::resize_file(path("t.pamd"), 16 + 4 * 104 + 50);
  const Contents c = read(path("t.pamd"));
  EXPECT_TRUE(c.truncated);
  ASSERT_EQ(c.records.size(), 4u);
  EXPECT_EQ(c.records.back(), recs[3]);
  EXPECT_FALSE(c.warnings.empty());
}

TEST_F(DatasetTest, ErrorMarkerTerminates) {
  std::mt19937_64 rng(7);
  const auto recs = monotone_records(rng, 3);
  {
    Writer w(path("m.pamd"));
    for (const auto& r : recs) w.append(r);
    w.write_error_marker();
  }
  const Contents c = read(path("m.pamd"));
  EXPECT_TRUE(c.aborted);
  EXPECT_EQ(c.records, recs);
  EXPECT_EQ(fs::file_size(path("m.pamd")), 16u + 4 * 104);
}

TEST_F(DatasetTest, NonMonotoneTimestampRejected) {
  std::mt19937_64 rng(8);
  auto recs = monotone_records(rng, 3);
  recs[2].timestamp_ns = recs[1].timestamp_ns;
  write(path("n.pamd"), recs);
  EXPECT_THROW(read(path("n.pamd")), Error);
}

TEST_F(DatasetTest, RecordFromStateNarrowsToFloat) {
  SimConfig cfg;
  ArmState s = make_rest_state(cfg, 2.5);
  s.joints[1].angle = 0.1;
  s.joints[3].velocity = -0.2;
  s.time_ns = 42;
  const Record r = record_from_state(s);
  EXPECT_EQ(r.timestamp_ns, 42u);
  EXPECT_EQ(r.joint_pos[1], 0.1f);
  EXPECT_EQ(r.joint_vel[3], -0.2f);
  EXPECT_EQ(r.pressure_obs[5], 2.5f);
}

TEST_F(DatasetTest, RoundTripProperty) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto recs = monotone_records(rng, rng() % 64);
    std::vector<std::byte> bytes;
    const auto h = encode_header(Header{});
    bytes.insert(bytes.end(), h.begin(), h.end());
    for (const auto& r : recs) {
      const auto b = encode_record(r);
      bytes.insert(bytes.end(), b.begin(), b.end());
    }
    const Contents c = decode(bytes);
    ASSERT_EQ(c.records, recs);
  }
}

}  // namespace
}  // namespace pamsim::dataset
