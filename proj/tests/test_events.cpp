#include <gtest/gtest.h>

#include <numeric>

#include "test_support.hpp"

using namespace raysweep;
using raysweep::testing::Gen;

namespace {

EventStream stream_at(int camera, std::initializer_list<double> times) {
  EventStream s;
  s.camera_id = camera;
  for (double t : times) s.events.push_back({t, 0, 0, 1});
  return s;
}

std::vector<double> times_in(const Chunk& c, const std::vector<EventStream>& streams, std::size_t cam) {
  std::vector<double> out;
  for (const auto& e : c.events(streams, cam)) out.push_back(e.t);
  return out;
}

}  // namespace

TEST(ChunkEvents, OneEventPerWindow) {
  const std::vector<EventStream> s = {stream_at(0, {0.1, 0.6, 1.1})};
  const auto chunks = chunk_events(s, 0.5);
  ASSERT_EQ(chunks.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(chunks[k].index, k);
    EXPECT_EQ(chunks[k].event_count(), 1u);
  }
  EXPECT_EQ(times_in(chunks[1], s, 0), std::vector<double>{0.6});
}

TEST(ChunkEvents, EverythingInsideOneWindow) {
  const std::vector<EventStream> s = {stream_at(0, {0.0, 0.1, 0.2, 0.49}), stream_at(1, {0.0, 0.3})};
  const auto chunks = chunk_events(s, 0.5);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].event_count(), 6u);
}

// Streams over [0, 1.0] and [0.2, 1.2]: the grid starts where both streams
// are live, so windows are [0.2, 0.7), [0.7, 1.2), [1.2, ...).
TEST(ChunkEvents, StaggeredStreamsHandFixture) {
  const std::vector<EventStream> s = {stream_at(0, {0.0, 0.4, 0.7, 1.0}), stream_at(1, {0.2, 1.2})};
  const auto chunks = chunk_events(s, 0.5);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_DOUBLE_EQ(chunks[0].t_start, 0.2);
  EXPECT_DOUBLE_EQ(chunks[0].t_end, 0.7);
  EXPECT_DOUBLE_EQ(chunks[1].t_start, 0.7);
  EXPECT_DOUBLE_EQ(chunks[2].t_start, 1.2);

  EXPECT_EQ(times_in(chunks[0], s, 0), std::vector<double>{0.4});
  EXPECT_EQ(times_in(chunks[0], s, 1), std::vector<double>{0.2});
  EXPECT_EQ(times_in(chunks[1], s, 0), (std::vector<double>{0.7, 1.0}));
  EXPECT_TRUE(times_in(chunks[1], s, 1).empty());
  EXPECT_TRUE(times_in(chunks[2], s, 0).empty());
  EXPECT_EQ(times_in(chunks[2], s, 1), std::vector<double>{1.2});
}

TEST(ChunkEvents, BoundaryEventOpensTheNextWindow) {
  const std::vector<EventStream> s = {stream_at(0, {0.0, 0.5 - 1e-6, 0.5, 1.0}), stream_at(1, {0.0})};
  const auto chunks = chunk_events(s, 0.5);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(times_in(chunks[0], s, 0), (std::vector<double>{0.0, 0.5 - 1e-6}));
  EXPECT_EQ(times_in(chunks[1], s, 0), std::vector<double>{0.5});
  EXPECT_EQ(times_in(chunks[2], s, 0), std::vector<double>{1.0});
}

TEST(ChunkEvents, EmptyWindowsAreKept) {
  const std::vector<EventStream> s = {stream_at(0, {0.0, 1.7})};
  const auto chunks = chunk_events(s, 0.5);
  ASSERT_EQ(chunks.size(), 4u);
  EXPECT_EQ(chunks[1].event_count(), 0u);
  EXPECT_EQ(chunks[2].event_count(), 0u);
  EXPECT_DOUBLE_EQ(chunks[3].t_end, 1.7);
}

TEST(ChunkEvents, PartitionsRandomStreams) {
  Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EventStream> s(static_cast<std::size_t>(g.integer(1, 4)));
    std::size_t total = 0;
    for (std::size_t c = 0; c < s.size(); ++c) {
      s[c].camera_id = static_cast<int>(c);
      const int n = g.integer(1, 400);
      std::vector<double> t(static_cast<std::size_t>(n));
      for (double& v : t) v = std::round(g.uniform(0.0, 3.0) * 1e3) / 1e3;
      t[0] = 0.0;
      std::sort(t.begin(), t.end());
      for (double v : t) s[c].events.push_back({v, 0, 0, 1});
      total += t.size();
    }
    const double T = g.uniform(0.05, 1.0);
    const auto chunks = chunk_events(s, T);
    std::size_t seen = 0;
    for (const auto& ch : chunks) {
      EXPECT_LT(ch.t_start, ch.t_end);
      seen += ch.event_count();
      for (std::size_t c = 0; c < s.size(); ++c)
        for (const auto& e : ch.events(s, c)) {
          EXPECT_GE(e.t, ch.t_start - 1e-9);
          EXPECT_LE(e.t, ch.t_end + 1e-9);
        }
    }
    EXPECT_EQ(seen, total);
    for (std::size_t k = 1; k < chunks.size(); ++k) EXPECT_EQ(chunks[k - 1].t_end, chunks[k].t_start);
  }
}

TEST(ChunkEvents, RejectsDisjointStreams) {
  const std::vector<EventStream> s = {stream_at(0, {0.0, 1.0}), stream_at(1, {1.5, 2.0})};
  EXPECT_THROW(chunk_events(s, 0.5), NoCommonTimeSpan);
  const std::vector<EventStream> empty = {stream_at(0, {0.0}), stream_at(1, {})};
  EXPECT_THROW(chunk_events(empty, 0.5), NoCommonTimeSpan);
  EXPECT_THROW(chunk_events({stream_at(0, {0.0})}, 0.0), InvalidArgument);
}

TEST(ReferenceView, StaticTrajectory) {
  Gen g(12);
  const Se3 P = g.pose();
  const PoseTrajectory traj({{0.0, P}, {0.5, P}, {1.0, P}});
  const std::vector<EventStream> s = {stream_at(0, {0.0, 0.9})};
  const Chunk c = chunk_events(s, 1.0).front();
  const Se3 ref = select_reference_view(c, traj, CameraModel{});
  EXPECT_LT((ref.translation() - P.translation()).norm(), 1e-12);
  EXPECT_LT(raysweep::testing::rotation_angle_between(ref, P), 1e-7);
}

TEST(ReferenceView, MidpointOfLinearMotion) {
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, Se3::from_translation(1, 0, 0)}});
  Chunk c;
  c.t_start = 0.0;
  c.t_end = 1.0;
  const Se3 ref = select_reference_view(c, traj, CameraModel{});
  EXPECT_DOUBLE_EQ(ref.translation().x(), 0.5);
}

TEST(ReferenceView, AppliesLeftExtrinsic) {
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, Se3::from_translation(1, 0, 0)}});
  Chunk c;
  c.t_start = 0.0;
  c.t_end = 1.0;
  CameraModel left;
  left.T_body_cam = Se3::from_translation(0.05, 0, 0);
  const Se3 ref = select_reference_view(c, traj, left);
  EXPECT_DOUBLE_EQ(ref.translation().x(), 0.55);
  EXPECT_EQ(ref.translation().y(), 0.0);
}

TEST(ReferenceView, SymmetricChunkOnConstantVelocity) {
  Gen g(13);
  const Eigen::Vector3d v(0.3, -0.2, 1.1);
  const Eigen::Vector3d axis = g.unit_vector();
  std::vector<PoseSample> s;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.1 * i;
    s.push_back({t, Se3::from_axis_angle(axis, 0.2 * t, v * t)});
  }
  const PoseTrajectory traj(s);
  Chunk c;
  c.t_start = 0.35;
  c.t_end = 1.15;
  const Se3 ref = select_reference_view(c, traj, CameraModel{});
  const Se3 expected = Se3::from_axis_angle(axis, 0.2 * 0.75, v * 0.75);
  EXPECT_LT((ref.translation() - expected.translation()).norm(), 1e-9);
  EXPECT_LT((ref.rotation_matrix() - expected.rotation_matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ReferenceView, OutsideTrajectoryThrows) {
  const PoseTrajectory traj({{0.0, Se3::identity()}, {1.0, Se3::identity()}});
  Chunk c;
  c.t_start = 2.0;
  c.t_end = 3.0;
  EXPECT_THROW(select_reference_view(c, traj, CameraModel{}), OutOfTrajectoryRange);
}

TEST(Events, InBoundsChecksResolution) {
  const CameraModel cam = raysweep::testing::pinhole(4, 3, 1.0, 2.0, 1.5);
  EXPECT_TRUE(in_bounds({0.0, 0, 0, 1}, cam));
  EXPECT_TRUE(in_bounds({0.0, 3, 2, 1}, cam));
  EXPECT_FALSE(in_bounds({0.0, 4, 0, 1}, cam));
  EXPECT_FALSE(in_bounds({0.0, 0, -1, 1}, cam));
}
