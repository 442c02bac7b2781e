#pragma once

#include <Eigen/Core>

namespace ata {

/// Late fusion: [vision / |vision|_2 , text / |text|_2]. The result has norm
/// sqrt(2). Throws Error naming the modality when either input has zero norm
/// or is non-finite.
Eigen::VectorXd fuse_features(const Eigen::VectorXd& vision,
                              const Eigen::VectorXd& text);

}  // namespace ata
