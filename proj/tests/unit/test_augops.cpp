// Copyright 2026 The madaug Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <array>
#include <map>
#include <string>

#include "madaug/augops.hpp"
#include "madaug/errors.hpp"
#include "test_util.hpp"

using namespace madaug;
using madaug::testing::numeric_gradient;
using madaug::testing::random_image;
using madaug::testing::rel_error;

TEST_CASE("standard registry holds 17 ops with the reserved slot defaulting to Flip") {
  const OpRegistry reg = OpRegistry::standard();
  REQUIRE(reg.size() == 17);
  CHECK(reg[15].name == "Flip");
  CHECK(reg[16].name == "Identity");
  CHECK(OpRegistry::standard("SamplePairing")[15].name == "SamplePairing");
  CHECK_THROWS_AS(OpRegistry::standard("Mixup"), ConfigError);
  CHECK_THROWS_AS(OpRegistry::from_names({"Rotate", "Warp"}), ConfigError);
}

TEST_CASE("ranges are ordered for every magnitude op and Identity ignores magnitude") {
  for (const AugmentationOp& op : OpRegistry::standard().ops()) {
    if (op.uses_magnitude) CHECK_MESSAGE(op.low < op.high, op.name);
  }
  const OpRegistry reg = OpRegistry::standard();
  CHECK_FALSE(reg[*reg.index_of("Identity")].uses_magnitude);
  for (const char* name : {"AutoContrast", "Invert", "Equalize"}) CHECK_FALSE(reg[*reg.index_of(name)].uses_magnitude);
  CHECK(reg[*reg.index_of("Posterize")].discrete);
  CHECK(reg[*reg.index_of("Solarize")].discrete);
}

TEST_CASE("map_magnitude matches the hand table at lambda 0, 0.5, 1") {
  // Native parameter per op; Posterize counts bits removed from 8.
  const std::map<std::string, std::array<double, 3>> table = {
      {"ShearX", {-0.3, 0.0, 0.3}},      {"ShearY", {-0.3, 0.0, 0.3}},     {"TranslateX", {-10.0, 0.0, 10.0}},
      {"TranslateY", {-10.0, 0.0, 10.0}}, {"Rotate", {-30.0, 0.0, 30.0}},   {"AutoContrast", {0.0, 0.0, 0.0}},
      {"Invert", {0.0, 0.0, 0.0}},        {"Equalize", {0.0, 0.0, 0.0}},    {"Solarize", {0.0, 0.5, 1.0}},
      {"Posterize", {0.0, 2.0, 4.0}},     {"Contrast", {0.1, 1.0, 1.9}},    {"Color", {0.1, 1.0, 1.9}},
      {"Brightness", {0.1, 1.0, 1.9}},    {"Sharpness", {0.1, 1.0, 1.9}},   {"Cutout", {0.0, 10.0, 20.0}},
      {"Flip", {0.0, 0.0, 0.0}},          {"Identity", {0.0, 0.0, 0.0}},
  };
  const OpRegistry reg = OpRegistry::standard();
  for (const AugmentationOp& op : reg.ops()) {
    const auto& row = table.at(op.name);
    CAPTURE(op.name);
    CHECK(map_magnitude(op, 0.0) == doctest::Approx(row[0]).epsilon(1e-12));
    CHECK(map_magnitude(op, 0.5) == doctest::Approx(row[1]).epsilon(1e-12));
    CHECK(map_magnitude(op, 1.0) == doctest::Approx(row[2]).epsilon(1e-12));
  }
  // Rounding happens for discrete ops only: 0.3 * 4 = 1.2 bits -> 1.
  const AugmentationOp posterize = reg[*reg.index_of("Posterize")];
  CHECK(map_magnitude_continuous(posterize, 0.3) == doctest::Approx(1.2));
  CHECK(map_magnitude(posterize, 0.3) == 1.0);
}

TEST_CASE("map_magnitude_continuous is monotone in lambda") {
  for (const AugmentationOp& op : OpRegistry::standard("SamplePairing").ops()) {
    double prev = map_magnitude_continuous(op, 0.0);
    for (int i = 1; i <= 100; ++i) {
      const double v = map_magnitude_continuous(op, i / 100.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("every op keeps pixels in [0, 1]") {
  Rng rng = make_stream(1, 1);
  const Image x = random_image(3, 8, 8, rng);
  const Image partner = random_image(3, 8, 8, rng);
  for (const char* slot : {"Flip", "SamplePairing"}) {
    for (const AugmentationOp& op : OpRegistry::standard(slot).ops()) {
      for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const Image y = apply_op(x, op, lambda, draw_op_randomness(rng, &partner));
        CAPTURE(op.name);
        CHECK(y.pixels.minCoeff() >= 0.0);
        CHECK(y.pixels.maxCoeff() <= 1.0);
        CHECK(y.same_shape(x));
      }
    }
  }
}

TEST_CASE("Identity is exact and midpoint geometric ops are identities") {
  Rng rng = make_stream(1, 2);
  const Image x = random_image(3, 8, 8, rng);
  const OpRegistry reg = OpRegistry::standard();
  for (double lambda : {0.0, 0.3, 1.0}) CHECK(apply_op(x, reg[*reg.index_of("Identity")], lambda) == x);
  for (const char* name : {"Rotate", "ShearX", "ShearY", "TranslateX", "TranslateY"}) {
    const Image y = apply_op(x, reg[*reg.index_of(name)], 0.5);
    CHECK_MESSAGE((y.pixels - x.pixels).abs().maxCoeff() < 1e-6, name);
  }
  CHECK(apply_op(x, reg[*reg.index_of("Cutout")], 0.0) == x);
}

TEST_CASE("Brightness on a constant image follows factor * pixel") {
  const OpRegistry reg = OpRegistry::standard();
  const AugmentationOp& op = reg[*reg.index_of("Brightness")];
  const Image x = Image::constant(3, 8, 8, 0.5);
  // factor = 0.1 + 1.8 * lambda; clamp at 1.
  const std::array<std::pair<double, double>, 4> cases = {{{0.0, 0.05}, {0.25, 0.275}, {0.5, 0.5}, {1.0, 0.95}}};
  for (const auto& [lambda, expected] : cases) {
    const Image y = apply_op(x, op, lambda);
    CHECK(y.pixels.minCoeff() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(y.pixels.maxCoeff() == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(apply_op(Image::constant(1, 4, 4, 0.8), op, 1.0).pixels.maxCoeff() == 1.0);
}

TEST_CASE("Color on a one-channel image is the identity") {
  Rng rng = make_stream(1, 3);
  const Image x = random_image(1, 8, 8, rng);
  const OpRegistry reg = OpRegistry::standard();
  CHECK(apply_op(x, reg[*reg.index_of("Color")], 0.9) == x);
}

TEST_CASE("continuous-op pixel gradients match central differences") {
  Rng rng = make_stream(1, 4);
  const Image x = random_image(3, 8, 8, rng, 0.3, 0.7);
  const Image u = random_image(3, 8, 8, rng, -1.0, 1.0);
  const OpRegistry reg = OpRegistry::standard();
  for (const char* name : {"ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate", "Invert", "Contrast", "Color",
                           "Brightness", "Sharpness"}) {
    const AugmentationOp& op = reg[*reg.index_of(name)];
    for (double lambda : {0.3, 0.62}) {
      const Image g = apply_op_vjp(x, op, lambda, u);
      const auto f = [&](const Eigen::VectorXd& v) {
        return (u.pixels * apply_op(Image(3, 8, 8, v.array()), op, lambda).pixels).sum();
      };
      const double err = rel_error(g.pixels.matrix(), numeric_gradient(f, x.pixels.matrix(), 1e-3));
      CHECK_MESSAGE(err < 1e-3, name << " lambda " << lambda << " err " << err);
    }
  }
}

TEST_CASE("perturb_magnitude adds bounded noise and clamps") {
  Rng rng = make_stream(1, 5);
  Eigen::VectorXd lambda(5);
  lambda << 0.0, 0.2, 0.5, 0.9, 1.0;
  CHECK(perturb_magnitude(lambda, 0.0, rng) == lambda);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd z = perturb_magnitude(Eigen::VectorXd::Zero(4), 0.3, rng);
    CHECK(z.minCoeff() >= 0.0);
    CHECK(z.maxCoeff() <= 0.3);
    const Eigen::VectorXd y = perturb_magnitude(lambda, 0.3, rng);
    CHECK(((y - lambda).array().abs() <= 0.3 + 1e-15).all());
    CHECK(y.minCoeff() >= 0.0);
    CHECK(y.maxCoeff() <= 1.0);
  }
}

TEST_CASE("registry JSON round-trips and the fingerprint tracks content") {
  const OpRegistry reg = OpRegistry::standard();
  const OpRegistry back = OpRegistry::from_json(reg.to_json());
  CHECK(back.size() == reg.size());
  CHECK(back.fingerprint() == reg.fingerprint());
  CHECK(reg.fingerprint().size() == 16);
  CHECK(OpRegistry::standard("SamplePairing").fingerprint() != reg.fingerprint());
  CHECK_THROWS_AS(OpRegistry::from_json("{\"ops\": [\"Nope\"]}"), ConfigError);
  CHECK_THROWS_AS(OpRegistry::from_json("not json"), ConfigError);
}

TEST_CASE("the application counter counts apply_op calls") {
  Rng rng = make_stream(1, 6);
  const Image x = random_image(3, 4, 4, rng);
  const OpRegistry reg = OpRegistry::standard();
  reset_op_application_count();
  for (const AugmentationOp& op : reg.ops()) apply_op(x, op, 0.4);
  CHECK(op_application_count() == reg.size());
}
