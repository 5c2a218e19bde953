#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace skar {

using Point3 = std::array<double, 3>;

// Per-frame 3D joint positions for up to two bodies, stored frame-major as
// (frame, body, joint). Absent bodies are all-zero with present[m] == false.
class SkeletonSequence {
 public:
  SkeletonSequence() = default;
  SkeletonSequence(std::size_t frames, std::size_t bodies, std::size_t joints);

  std::size_t frames() const { return frames_; }
  std::size_t bodies() const { return bodies_; }
  std::size_t joints() const { return joints_; }

  Point3& at(std::size_t t, std::size_t m, std::size_t v) { return positions_[index(t, m, v)]; }
  const Point3& at(std::size_t t, std::size_t m, std::size_t v) const { return positions_[index(t, m, v)]; }

  bool present(std::size_t m) const { return present_[m]; }
  void set_present(std::size_t m, bool flag) { present_[m] = flag; }

  // Marks every body present iff it has a non-zero coordinate somewhere.
  void detect_presence();

  const std::vector<Point3>& positions() const { return positions_; }

  bool operator==(const SkeletonSequence&) const = default;

 private:
  std::size_t index(std::size_t t, std::size_t m, std::size_t v) const {
    return (t * bodies_ + m) * joints_ + v;
  }

  std::size_t frames_ = 0;
  std::size_t bodies_ = 0;
  std::size_t joints_ = 0;
  std::vector<Point3> positions_;
  std::vector<bool> present_;
};

enum class ViewTag { front, side, synthetic };

std::string to_string(ViewTag view);
ViewTag parse_view_tag(const std::string& text);

struct ActionSample {
  SkeletonSequence sequence;
  std::size_t label = 0;
  std::string class_name;
  ViewTag view = ViewTag::synthetic;
  std::string subject = "none";
};

}  // namespace skar
