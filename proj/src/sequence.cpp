#include "skar/sequence.hpp"

#include <stdexcept>

#include "skar/error.hpp"

namespace skar {

SkeletonSequence::SkeletonSequence(std::size_t frames, std::size_t bodies, std::size_t joints)
    : frames_(frames),
      bodies_(bodies),
      joints_(joints),
      positions_(frames * bodies * joints, Point3{0.0, 0.0, 0.0}),
      present_(bodies, true) {
  if (frames == 0) throw DataError("sequence must have at least one frame");
  if (bodies < 1 || bodies > 2) throw DataError("sequence must have 1 or 2 bodies");
  if (joints == 0) throw DataError("sequence must have at least one joint");
}

void SkeletonSequence::detect_presence() {
  for (std::size_t m = 0; m < bodies_; ++m) {
    bool any = false;
    for (std::size_t t = 0; t < frames_ && !any; ++t) {
      for (std::size_t v = 0; v < joints_ && !any; ++v) {
        const Point3& p = at(t, m, v);
        any = p[0] != 0.0 || p[1] != 0.0 || p[2] != 0.0;
      }
    }
    present_[m] = any;
  }
}

std::string to_string(ViewTag view) {
  switch (view) {
    case ViewTag::front: return "front";
    case ViewTag::side: return "side";
    case ViewTag::synthetic: return "synthetic";
  }
  return "synthetic";
}

ViewTag parse_view_tag(const std::string& text) {
  if (text == "front") return ViewTag::front;
  if (text == "side") return ViewTag::side;
  if (text == "synthetic") return ViewTag::synthetic;
  throw DataError("unknown view tag '" + text + "'");
}

}  // namespace skar
