// lyrec/matrix.h
//
// Copyright 2026 The lyrec authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LYREC_MATRIX_H_
#define LYREC_MATRIX_H_

#include <Eigen/Dense>

namespace lyrec {

// All internal math runs in double precision; on-disk feature stacks are
// float32 (see features::WriteStack).
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

}  // namespace lyrec

#endif  // LYREC_MATRIX_H_
