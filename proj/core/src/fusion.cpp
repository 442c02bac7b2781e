#include "ata/fusion.hpp"

#include <cmath>

#include "ata/error.hpp"

namespace ata {

Eigen::VectorXd fuse_features(const Eigen::VectorXd& vision,
                              const Eigen::VectorXd& text) {
  if (!vision.allFinite()) throw Error("fuse_features: non-finite vision vector");
  if (!text.allFinite()) throw Error("fuse_features: non-finite text vector");
  const double vision_norm = vision.norm();
  const double text_norm = text.norm();
  if (vision_norm == 0.0) throw Error("fuse_features: vision vector has zero norm");
  if (text_norm == 0.0) throw Error("fuse_features: text vector has zero norm");
  Eigen::VectorXd fused(vision.size() + text.size());
  fused.head(vision.size()) = vision / vision_norm;
  fused.tail(text.size()) = text / text_norm;
  return fused;
}

}  // namespace ata
