#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "raysweep/errors.hpp"
#include "raysweep/geometry.hpp"

namespace raysweep {

struct Event {
  double t = 0.0;  ///< seconds
  int x = 0;
  int y = 0;
  int polarity = 1;  ///< +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

inline bool in_bounds(const Event& e, const CameraModel& cam) {
  return e.x >= 0 && e.x < cam.width && e.y >= 0 && e.y < cam.height;
}

struct EventStream {
  int camera_id = 0;
  std::vector<Event> events;  ///< non-decreasing timestamps

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
};

/// Half-open index range into one camera's stream.
struct EventRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

/// One time window of the recording. Slices index into the streams the
/// chunk was built from, in the same camera order.
struct Chunk {
  std::size_t index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<EventRange> slices;
  std::optional<Se3> reference_view;

  double t_mid() const { return 0.5 * (t_start + t_end); }

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& s : slices) n += s.size();
    return n;
  }

  std::span<const Event> events(const std::vector<EventStream>& streams, std::size_t cam) const {
    const auto& ev = streams.at(cam).events;
    return std::span<const Event>(ev).subspan(slices.at(cam).begin, slices.at(cam).size());
  }
};

namespace detail {

// Relative slack on chunk boundaries, so that t = start + k*T lands in
// chunk k despite decimal timestamps not being representable.
inline constexpr double kBoundarySlack = 1e-9;

inline std::size_t chunk_index(double t, double origin, double duration) {
  const double q = (t - origin) / duration;
  if (q <= 0.0) return 0;
  double k = std::floor(q);
  if (q - k > 1.0 - kBoundarySlack) k += 1.0;
  return static_cast<std::size_t>(k);
}

}  // namespace detail

/// Partitions the recording into consecutive half-open windows
/// [start, start + T). The grid is anchored at the latest first-event time
/// across streams and extends to the last event of any stream; the final
/// window is clipped to that last event when possible. Events earlier than
/// the anchor belong to no chunk.
inline std::vector<Chunk> chunk_events(const std::vector<EventStream>& streams, double duration_T) {
  if (!(duration_T > 0.0)) throw InvalidArgument("chunk duration must be positive");
  if (streams.empty()) throw NoCommonTimeSpan("no event streams");

  double origin = -std::numeric_limits<double>::infinity();
  double common_end = std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& s : streams) {
    if (s.events.empty()) throw NoCommonTimeSpan("camera " + std::to_string(s.camera_id) + " has no events");
    origin = std::max(origin, s.events.front().t);
    common_end = std::min(common_end, s.events.back().t);
    last = std::max(last, s.events.back().t);
  }
  if (origin > common_end) {
    std::ostringstream msg;
    msg << "event streams do not overlap in time (latest start " << origin << " > earliest end "
        << common_end << ")";
    throw NoCommonTimeSpan(msg.str());
  }

  const std::size_t n_chunks = detail::chunk_index(last, origin, duration_T) + 1;
  std::vector<Chunk> chunks(n_chunks);
  for (std::size_t k = 0; k < n_chunks; ++k) {
    Chunk& c = chunks[k];
    c.index = k;
    c.t_start = origin + static_cast<double>(k) * duration_T;
    c.t_end = origin + static_cast<double>(k + 1) * duration_T;
    c.slices.resize(streams.size());
  }
  if (last > chunks.back().t_start) chunks.back().t_end = std::min(chunks.back().t_end, last);

  for (std::size_t cam = 0; cam < streams.size(); ++cam) {
    const auto& ev = streams[cam].events;
    // First event at or after the anchor; chunk_index is monotone in t so
    // the remaining boundaries follow by binary search.
    auto begin = std::lower_bound(ev.begin(), ev.end(), origin,
                                  [](const Event& e, double t) { return e.t < t; });
    for (std::size_t k = 0; k < n_chunks; ++k) {
      auto end = std::partition_point(begin, ev.end(), [&](const Event& e) {
        return detail::chunk_index(e.t, origin, duration_T) <= k;
      });
      chunks[k].slices[cam] = {static_cast<std::size_t>(begin - ev.begin()),
                               static_cast<std::size_t>(end - ev.begin())};
      begin = end;
    }
  }
  return chunks;
}

/// World-from-left-camera pose at the chunk's temporal midpoint.
inline Se3 select_reference_view(const Chunk& chunk, const PoseTrajectory& traj,
                                 const CameraModel& left_cam) {
  return interpolate_pose(chunk.t_mid(), traj) * left_cam.T_body_cam;
}

}  // namespace raysweep
