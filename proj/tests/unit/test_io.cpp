#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "freeform/error.hpp"
#include "freeform/io.hpp"

using namespace freeform;
namespace fs = std::filesystem;

namespace {

const fs::path kData = FREEFORM_TEST_DATA;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freeform_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    return e.what();
  }
  return "";
}

const char* kMinimal = R"({
  "mode": "imaging",
  "media": {"n1": 1, "n2": 1.5, "n3": 1},
  "domain": {"shape": "disk", "radius": 1},
  "map": {"kind": "identity"},
  "a": 4,
  "C": -1
})";

}  // namespace

TEST(Config, MinimalDefaults) {
  const DesignConfig c = parse_config(kMinimal);
  EXPECT_EQ(c.mode, Mode::Imaging);
  EXPECT_EQ(c.grid, 65u);
  EXPECT_EQ(c.map.kind, "identity");
  ASSERT_TRUE(c.C.has_value());
  EXPECT_EQ(*c.C, -1.0);
  EXPECT_EQ(c.tol.trace_position, 1e-6);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_message("{\n  \"mode\": \"imaging\",\n  oops\n}").find("line 3"),
            std::string::npos);
  std::string bad = kMinimal;
  bad.insert(bad.find("\"C\""), "\"colour\": 1, ");
  EXPECT_NE(config_message(bad).find("colour: unknown field"), std::string::npos);
  bad = kMinimal;
  bad.replace(bad.find("1.5"), 3, "0.9");
  EXPECT_NE(config_message(bad).find("media.n2"), std::string::npos);
  bad = kMinimal;
  bad.replace(bad.find("imaging"), 7, "hologram");
  EXPECT_NE(config_message(bad).find("mode"), std::string::npos);
}

TEST(Config, ToleranceOverrides) {
  Tolerances t;
  apply_overrides(t, "trace_position=1e-5, curl=2e-4");
  EXPECT_EQ(t.trace_position, 1e-5);
  EXPECT_EQ(t.curl, 2e-4);
  EXPECT_THROW(apply_overrides(t, "wobble=1"), Error);
  EXPECT_THROW(apply_overrides(t, "curl=abc"), Error);
}

TEST(Obj, FlatSheetLayoutAndRoundTrip) {
  const fs::path dir = scratch("obj");
  const Grid g({0, 0}, {1, 1}, 2, 2);
  const ParametricSheet flat(g, [](const Vec2& s) -> std::optional<Vec3> { return Vec3(s, 2.0); });
  export_obj(flat, dir / "a.obj");
  const std::string text = slurp(dir / "a.obj");
  std::istringstream lines(text);
  std::string line;
  int v = 0, f = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  EXPECT_EQ(v, 4);
  EXPECT_EQ(f, 2);

  const ParametricSheet back = import_obj(dir / "a.obj");
  ASSERT_EQ(back.grid().nx(), 2u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_TRUE(back.valid(k));
    EXPECT_EQ(back.points()[k].x, flat.points()[k].x);
    EXPECT_EQ(back.points()[k].y, flat.points()[k].y);
    EXPECT_EQ(back.points()[k].z, 2.0);
  }
  export_obj(back, dir / "b.obj");
  EXPECT_EQ(slurp(dir / "b.obj"), text);
}

TEST(Obj, InvalidNodesDropTheirCells) {
  const fs::path dir = scratch("obj_holes");
  const Grid g({0, 0}, {2, 2}, 3, 3);
  const ParametricSheet sheet(g, [](const Vec2& s) -> std::optional<Vec3> {
    if (s.x1 > 1.5 && s.x2 > 1.5) return std::nullopt;
    return Vec3(s, std::sin(s.x1) * std::cos(s.x2) / 3.0);
  });
  export_obj(sheet, dir / "h.obj");
  const ParametricSheet back = import_obj(dir / "h.obj");
  EXPECT_EQ(back.valid_count(), 8u);
  EXPECT_FALSE(back.valid(2, 2));
  for (std::size_t k = 0; k < 9; ++k) {
    if (sheet.valid(k)) EXPECT_EQ(norm(back.points()[k] - sheet.points()[k]), 0.0);
  }
  EXPECT_THROW(import_obj(dir / "missing.obj"), Error);
}

TEST(Csv, RoundTripIsExact) {
  const fs::path dir = scratch("csv");
  const Grid g({-1, -1}, {1, 1}, 3, 3);
  std::vector<double> a(9), b(9);
  for (std::size_t k = 0; k < 9; ++k) {
    a[k] = std::sqrt(2.0) * static_cast<double>(k) + 1.0 / 3.0;
    b[k] = std::exp(-static_cast<double>(k));
  }
  std::vector<unsigned char> valid(9, 1);
  valid[4] = 0;
  export_csv(dir / "t.csv", g, {{"a", a}, {"b", b}}, &valid);
  const CsvTable t = read_csv(dir / "t.csv");
  ASSERT_EQ(t.header, (std::vector<std::string>{"x1", "x2", "a", "b"}));
  ASSERT_EQ(t.rows.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(t.rows[k][0], g.point(k).x1);
    if (k == 4) {
      EXPECT_TRUE(std::isnan(t.rows[k][2]));
      continue;
    }
    EXPECT_EQ(t.rows[k][2], a[k]);
    EXPECT_EQ(t.rows[k][3], b[k]);
  }
}

TEST(Sha256, KnownDigest) {
  const fs::path dir = scratch("sha");
  std::ofstream(dir / "abc", std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(dir / "abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::ConfigError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::CurlViolation), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::BoundViolation), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::IoError), 4);
}

TEST(RunDesign, IdentityPassesAndIsDeterministic) {
  const DesignConfig c = load_config(kData / "identity.json");
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunReport ra = run_design(c, Stage::Design, a);
  EXPECT_EQ(ra.exit_code, 0) << ra.message;
  ASSERT_EQ(ra.traces.size(), 2u);
  for (const TraceSummary& t : ra.traces) EXPECT_TRUE(t.pass) << t.name;
  const RunReport rb = run_design(c, Stage::Design, b);
  ASSERT_EQ(ra.files.size(), rb.files.size());
  for (std::size_t k = 0; k < ra.files.size(); ++k) {
    EXPECT_EQ(ra.files[k].path, rb.files[k].path);
    EXPECT_EQ(ra.files[k].sha256, rb.files[k].sha256);
  }
  EXPECT_TRUE(fs::exists(a / "report.json"));

  const RunReport rt = run_design(c, Stage::Trace, a);
  EXPECT_EQ(rt.exit_code, 0) << rt.message;
  EXPECT_TRUE(fs::exists(a / "trace_report.json"));
}

TEST(RunDesign, SwirlIsAConditionFailure) {
  const DesignConfig c = load_config(kData / "swirl.json");
  const RunReport r = run_design(c, Stage::Check, std::nullopt);
  EXPECT_EQ(r.exit_code, 3);
  ASSERT_TRUE(r.error_code.has_value());
  EXPECT_EQ(*r.error_code, "CURL_VIOLATION");
  EXPECT_EQ(run_design(c, Stage::Design, std::nullopt).exit_code, 3);
}

TEST(RunDesign, TraceWithoutMeshIsAnIoFailure) {
  const DesignConfig c = load_config(kData / "identity.json");
  const RunReport r = run_design(c, Stage::Trace, scratch("empty"));
  EXPECT_EQ(r.exit_code, 4) << r.message;
}
