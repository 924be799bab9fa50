// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "iclmimo/checkpoint.hpp"
#include "iclmimo/errors.hpp"
#include "iclmimo/icl_model.hpp"
#include "iclmimo/rng.hpp"

using namespace iclmimo;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& stem) {
  return fs::temp_directory_path() / ("iclmimo_test_" + stem + ".ckpt");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("save and load round-trip byte for byte") {
  IclModelConfig cfg;
  cfg.m = 2;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.max_tokens = 7;
  IclModel model(cfg);
  model.init(RandomState::from_seed(60));
  // Nudge a value to something with a messy mantissa.
  model.params()[0].value[3] = 0.1 + 1e-17;

  const fs::path p1 = temp_file("rt1"), p2 = temp_file("rt2");
  save_checkpoint(p1.string(), model.params());
  const std::vector<NamedTensor> loaded = load_checkpoint(p1.string());
  save_checkpoint(p2.string(), loaded);
  CHECK(slurp(p1) == slurp(p2));

  REQUIRE(loaded.size() == model.params().size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].name == model.params()[i].name);
    CHECK(loaded[i].rows == model.params()[i].rows);
    CHECK(loaded[i].cols == model.params()[i].cols);
    REQUIRE(loaded[i].value.size() == model.params()[i].value.size());
    for (std::size_t j = 0; j < loaded[i].value.size(); ++j)
      CHECK(loaded[i].value[j] == model.params()[i].value[j]);
  }

  IclModel other(cfg);
  other.init(RandomState::from_seed(61));
  load_into_model(other, p1.string());
  for (std::size_t i = 0; i < other.params().size(); ++i)
    for (std::size_t j = 0; j < other.params()[i].value.size(); ++j)
      CHECK(other.params()[i].value[j] == model.params()[i].value[j]);

  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("corrupted and missing files are checkpoint errors") {
  IclModelConfig cfg;
  cfg.m = 2;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.max_tokens = 7;
  IclModel model(cfg);
  model.init(RandomState::from_seed(62));

  const fs::path p = temp_file("bad");
  save_checkpoint(p.string(), model.params());

  // Flip the magic.
  std::string bytes = slurp(p);
  bytes[0] = 'X';
  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(p.string()), CheckpointError);

  // Truncate mid-payload.
  bytes[0] = 'I';
  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(p.string()), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint((p.string() + ".does_not_exist")), CheckpointError);
  fs::remove(p);
}

TEST_CASE("loading into a mismatched model is a shape error") {
  IclModelConfig small;
  small.m = 2;
  small.d = 16;
  small.heads = 2;
  small.max_tokens = 7;
  IclModel model(small);
  model.init(RandomState::from_seed(63));
  const fs::path p = temp_file("shape");
  save_checkpoint(p.string(), model.params());

  IclModelConfig wide = small;
  wide.d = 32;
  wide.heads = 4;
  IclModel other(wide);
  other.init(RandomState::from_seed(64));
  try {
    load_into_model(other, p.string());
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("embed_w") != std::string::npos);
  }
  fs::remove(p);
}
