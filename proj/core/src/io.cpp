#include "freeform/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "freeform/field.hpp"
#include "freeform/tracer.hpp"
#include "json.hpp"

namespace freeform {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigError, where + ": " + what);
}

// Field access with dotted paths in the messages.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  void only(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!allowed.count(it.key())) config_error(at(it.key()), "unknown field");
    }
  }

  Reader object(const std::string& key) const {
    if (!has(key)) config_error(at(key), "missing");
    return Reader(j_.at(key), at(key));
  }

  double number(const std::string& key) const {
    if (!has(key)) config_error(at(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_number()) config_error(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) config_error(at(key), "must be finite");
    return d;
  }
  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  std::optional<double> maybe(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      config_error(at(key), "expected a non-negative integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
  }

  std::string text(const std::string& key) const {
    if (!has(key)) config_error(at(key), "missing");
    if (!j_.at(key).is_string()) config_error(at(key), "expected a string");
    return j_.at(key).get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key, std::size_t n) const {
    if (!has(key)) config_error(at(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != n) {
      config_error(at(key), "expected an array of " + std::to_string(n) + " numbers");
    }
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) config_error(at(key), "expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  Vec2 vec2(const std::string& key) const {
    const auto v = numbers(key, 2);
    return {v[0], v[1]};
  }
  Vec3 vec3(const std::string& key) const {
    const auto v = numbers(key, 3);
    return {v[0], v[1], v[2]};
  }

 private:
  const json& j_;
  std::string path_;
};

void check_one_of(const std::string& where, const std::string& value,
                  std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (value == o) return;
  }
  std::string list;
  for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
  config_error(where, "'" + value + "' is not one of " + list);
}

Domain parse_domain(const Reader& r) {
  r.only({"shape", "center", "radius", "lo", "hi"});
  const std::string shape = r.text("shape");
  check_one_of(r.at("shape"), shape, {"disk", "rectangle"});
  if (shape == "disk") {
    const double radius = r.number("radius");
    if (!(radius > 0.0)) config_error(r.at("radius"), "must be positive");
    return Domain::disk(r.has("center") ? r.vec2("center") : Vec2{}, radius);
  }
  const Vec2 lo = r.vec2("lo"), hi = r.vec2("hi");
  if (!(lo.x1 < hi.x1 && lo.x2 < hi.x2)) config_error(r.at("hi"), "must exceed lo");
  return Domain::rectangle(lo, hi);
}

void check_expression(const std::string& where, const std::string& text) {
  try {
    (void)Expression::parse(text);
  } catch (const Error& e) {
    config_error(where, e.what());
  }
}

Tolerances parse_tolerances(const Reader& r) {
  r.only({"curl", "map", "path", "pde", "trace_direction", "trace_position", "mesh_position",
          "mesh_direction"});
  Tolerances t;
  auto positive = [&](const char* key, double& slot) {
    if (!r.has(key)) return;
    slot = r.number(key);
    if (!(slot > 0.0)) config_error(r.at(key), "must be positive");
  };
  positive("curl", t.curl);
  positive("map", t.map);
  positive("path", t.path);
  positive("pde", t.pde);
  positive("trace_direction", t.trace_direction);
  positive("trace_position", t.trace_position);
  positive("mesh_position", t.mesh_position);
  positive("mesh_direction", t.mesh_direction);
  return t;
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 40> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::FarField: return "far_field";
    case Mode::Imaging: return "imaging";
    case Mode::FarFieldMirror: return "far_field_mirror";
    case Mode::ImagingMirror: return "imaging_mirror";
  }
  return "far_field";
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Check: return "check";
    case Stage::Design: return "design";
    case Stage::Export: return "export";
    case Stage::Trace: return "trace";
  }
  return "design";
}

void apply_overrides(Tolerances& tol, std::string_view overrides) {
  std::size_t pos = 0;
  while (pos < overrides.size()) {
    std::size_t end = overrides.find(',', pos);
    if (end == std::string_view::npos) end = overrides.size();
    std::string_view item = overrides.substr(pos, end - pos);
    pos = end + 1;
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) {
      item.remove_prefix(1);
    }
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) {
      item.remove_suffix(1);
    }
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      config_error("--tol-overrides", "expected name=value, got '" + std::string(item) + "'");
    }
    const std::string key(item.substr(0, eq));
    const std::string_view num = item.substr(eq + 1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || p != num.data() + num.size() || !(v > 0.0)) {
      config_error("--tol-overrides", "bad value for " + key);
    }
    double* slot = key == "curl"              ? &tol.curl
                   : key == "map"             ? &tol.map
                   : key == "path"            ? &tol.path
                   : key == "pde"             ? &tol.pde
                   : key == "trace_direction" ? &tol.trace_direction
                   : key == "trace_position"  ? &tol.trace_position
                   : key == "mesh_position"   ? &tol.mesh_position
                   : key == "mesh_direction"  ? &tol.mesh_direction
                                              : nullptr;
    if (!slot) config_error("--tol-overrides", "unknown tolerance '" + key + "'");
    *slot = v;
  }
}

DesignConfig parse_config(std::string_view json_text, const std::string& source) {
  json root;
  try {
    root = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, source + ": " + e.what());
  }
  const Reader r(root, "");
  r.only({"name", "mode", "media", "domain", "grid", "mesh_grid", "field", "sigma1",
          "construction", "w", "map", "a", "x0", "u0", "delta0", "d0", "entry", "image_domain",
          "C", "trace", "tolerances"});

  DesignConfig c;
  c.name = r.text("name", c.name);
  const std::string mode = r.text("mode");
  check_one_of("mode", mode, {"far_field", "imaging", "far_field_mirror", "imaging_mirror"});
  c.mode = mode == "far_field"          ? Mode::FarField
           : mode == "imaging"          ? Mode::Imaging
           : mode == "far_field_mirror" ? Mode::FarFieldMirror
                                        : Mode::ImagingMirror;
  const bool lens = c.mode == Mode::FarField || c.mode == Mode::Imaging;
  const bool imaging = c.mode == Mode::Imaging || c.mode == Mode::ImagingMirror;

  if (r.has("media")) {
    const Reader m = r.object("media");
    m.only({"n1", "n2", "n3"});
    c.media = Media{m.number("n1"), m.number("n2"), m.number("n3")};
    if (!(c.media.n1 > 0 && c.media.n2 > 0 && c.media.n3 > 0)) {
      config_error("media", "refractive indices must be positive");
    }
    if (lens && !(c.media.n2 > std::max(c.media.n1, c.media.n3))) {
      config_error("media.n2", "the lens index must exceed n1 and n3");
    }
  } else if (lens) {
    config_error("media", "missing");
  }

  c.domain = parse_domain(r.object("domain"));
  c.grid = r.count("grid", c.grid);
  if (c.grid < 3) config_error("grid", "need at least 3 nodes per side");
  c.mesh_grid = r.count("mesh_grid", c.mesh_grid);
  if (c.mesh_grid < 2) config_error("mesh_grid", "need at least 2 nodes per side");
  c.C = r.maybe("C");

  if (!imaging) {
    if (r.has("field")) {
      const Reader f = r.object("field");
      f.only({"kind", "direction", "point", "strength", "potential"});
      c.field.kind = f.text("kind");
      check_one_of(f.at("kind"), c.field.kind, {"constant", "point_source", "swirl", "gradient"});
      if (f.has("direction")) c.field.direction = f.vec3("direction");
      if (f.has("point")) c.field.point = f.vec3("point");
      c.field.strength = f.number("strength", 0.0);
      if (c.field.kind == "gradient") {
        c.field.potential = f.text("potential");
        check_expression(f.at("potential"), c.field.potential);
      }
    }
    c.construction = r.text("construction", c.construction);
    check_one_of("construction", c.construction, {"general", "orthogonal", "vertical"});
    if (!lens && c.construction != "general") {
      config_error("construction", "mirrors use the general construction");
    }
    if (r.has("sigma1")) {
      const Reader s = r.object("sigma1");
      s.only({"kind", "height", "expression", "C_tilde"});
      c.sigma1.kind = s.text("kind");
      check_one_of(s.at("kind"), c.sigma1.kind, {"flat", "expression", "orthogonal"});
      c.sigma1.height = s.number("height", c.sigma1.height);
      if (c.sigma1.kind == "expression") {
        c.sigma1.expression = s.text("expression");
        check_expression(s.at("expression"), c.sigma1.expression);
      }
      if (c.sigma1.kind == "orthogonal") c.sigma1.C_tilde = s.number("C_tilde");
    }
    if ((c.construction == "orthogonal") != (c.sigma1.kind == "orthogonal")) {
      config_error("sigma1.kind", "the orthogonal construction needs sigma1.kind = orthogonal");
    }
    if (r.has("w")) c.w = r.vec3("w");
    if (!c.C) config_error("C", "missing");
  } else {
    const Reader m = r.object("map");
    m.only({"kind", "alpha", "h", "matrix", "offset", "t1", "t2"});
    c.map.kind = m.text("kind");
    check_one_of(m.at("kind"), c.map.kind,
                 {"identity", "magnification", "axis", "affine", "custom"});
    if (c.map.kind == "magnification") c.map.alpha = m.number("alpha");
    if (c.map.kind == "axis") {
      c.map.h = m.text("h");
      check_expression(m.at("h"), c.map.h);
    }
    if (c.map.kind == "affine") {
      const auto v = m.numbers("matrix", 4);
      c.map.matrix = Mat2{{{{v[0], v[1]}, {v[2], v[3]}}}};
      if (m.has("offset")) c.map.offset = m.vec2("offset");
    }
    if (c.map.kind == "custom") {
      c.map.t1 = m.text("t1");
      c.map.t2 = m.text("t2");
      check_expression(m.at("t1"), c.map.t1);
      check_expression(m.at("t2"), c.map.t2);
    }
    c.a = r.number("a");
    if (!(c.a > 0.0)) config_error("a", "must be positive");
    if (r.has("x0")) c.x0 = r.vec2("x0");
    if (r.has("u0") && r.has("delta0")) config_error("delta0", "give either u0 or delta0");
    c.u0 = r.has("delta0") ? r.number("delta0") : r.number("u0", c.u0);
    c.d0 = r.maybe("d0");
    if (c.d0 && !(*c.d0 > 0.0)) config_error("d0", "must be positive");
    c.entry = r.text("entry", c.entry);
    check_one_of("entry", c.entry, {"line_integral", "closed_form"});
    if (r.has("image_domain")) c.image_domain = parse_domain(r.object("image_domain"));
    if (!c.C && !c.d0) config_error("C", "missing (or give d0)");
    if (c.C && c.d0) config_error("d0", "give either C or d0");
  }

  if (r.has("trace")) {
    const Reader t = r.object("trace");
    t.only({"rays", "seed"});
    c.rays = t.count("rays", c.rays);
    c.seed = t.count("seed", c.seed);
  }
  if (r.has("tolerances")) c.tol = parse_tolerances(r.object("tolerances"));
  return c;
}

DesignConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

ImagingMap build_map(const MapSpec& spec, double a) {
  if (spec.kind == "identity") return ImagingMap::identity(a);
  if (spec.kind == "magnification") return ImagingMap::magnification(spec.alpha, a);
  if (spec.kind == "axis") return ImagingMap::axis(Expression::parse(spec.h), a);
  if (spec.kind == "affine") return ImagingMap::affine(spec.matrix, spec.offset, a);
  if (spec.kind == "custom") {
    return ImagingMap::custom(Expression::parse(spec.t1), Expression::parse(spec.t2), a);
  }
  throw Error(ErrorCode::ConfigError, "map.kind: unknown '" + spec.kind + "'");
}

IncidentField build_field(const FieldSpec& spec, const Domain& domain) {
  if (spec.kind == "constant") return constant_field(spec.direction, domain);
  if (spec.kind == "point_source") return point_source_field(spec.point, domain);
  if (spec.kind == "swirl") return swirl_field(spec.strength, domain);
  if (spec.kind == "gradient") return gradient_field(Expression::parse(spec.potential), domain);
  throw Error(ErrorCode::ConfigError, "field.kind: unknown '" + spec.kind + "'");
}

// --- export -------------------------------------------------------------------

void export_obj(const ParametricSheet& sheet, const fs::path& path) {
  const Grid& g = sheet.grid();
  std::ofstream out = open_out(path);
  out << "# freeform sheet\n";
  out << "# grid " << g.nx() << " " << g.ny() << " " << fmt17(g.lo().x1) << " "
      << fmt17(g.lo().x2) << " " << fmt17(g.hi().x1) << " " << fmt17(g.hi().x2) << "\n";
  std::vector<std::size_t> id(g.size(), 0);
  std::size_t next = 1;
  for (std::size_t j = 0; j < g.ny(); ++j) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      const std::size_t k = g.index(i, j);
      if (!sheet.valid(k)) continue;
      const Vec3& p = sheet.points()[k];
      out << "v " << fmt17(p.x) << " " << fmt17(p.y) << " " << fmt17(p.z) << "\n";
      out << "vt " << i << " " << j << "\n";
      id[k] = next++;
    }
  }
  auto corner = [&](std::size_t k) { return std::to_string(id[k]) + "/" + std::to_string(id[k]); };
  for (std::size_t j = 0; j + 1 < g.ny(); ++j) {
    for (std::size_t i = 0; i + 1 < g.nx(); ++i) {
      const std::size_t a = g.index(i, j), b = g.index(i + 1, j);
      const std::size_t c = g.index(i + 1, j + 1), d = g.index(i, j + 1);
      if (!id[a] || !id[b] || !id[c] || !id[d]) continue;
      // Counter-clockwise seen from +z.
      out << "f " << corner(a) << " " << corner(b) << " " << corner(c) << "\n";
      out << "f " << corner(a) << " " << corner(c) << " " << corner(d) << "\n";
    }
  }
  finish(out, path);
}

ParametricSheet import_obj(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::optional<Grid> grid;
  std::vector<Vec3> verts;
  std::vector<std::pair<std::size_t, std::size_t>> tex;
  std::string line;
  std::size_t lineno = 0;
  auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::IoError,
                path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream s(line);
    std::string tag;
    s >> tag;
    if (tag == "#") {
      std::string word;
      s >> word;
      if (word != "grid") continue;
      std::size_t nx = 0, ny = 0;
      double a = 0, b = 0, c = 0, d = 0;
      if (!(s >> nx >> ny >> a >> b >> c >> d) || nx < 2 || ny < 2) bad("bad grid header");
      grid.emplace(Vec2{a, b}, Vec2{c, d}, nx, ny);
    } else if (tag == "v") {
      std::string x, y, z;
      if (!(s >> x >> y >> z)) bad("bad vertex");
      verts.push_back({std::strtod(x.c_str(), nullptr), std::strtod(y.c_str(), nullptr),
                       std::strtod(z.c_str(), nullptr)});
    } else if (tag == "vt") {
      std::size_t i = 0, j = 0;
      if (!(s >> i >> j)) bad("bad texture index");
      tex.emplace_back(i, j);
    }
  }
  if (!grid) bad("missing '# grid' header");
  if (verts.size() != tex.size()) bad("vertex and vt counts differ");
  std::vector<Vec3> points(grid->size(), Vec3{kNaN, kNaN, kNaN});
  std::vector<unsigned char> valid(grid->size(), 0);
  for (std::size_t n = 0; n < verts.size(); ++n) {
    const auto [i, j] = tex[n];
    if (i >= grid->nx() || j >= grid->ny()) bad("vt index outside the grid");
    points[grid->index(i, j)] = verts[n];
    valid[grid->index(i, j)] = 1;
  }
  return ParametricSheet(*grid, std::move(points), std::move(valid));
}

ParametricSheet resample(const ParametricSheet& sheet, std::size_t n, std::size_t margin_cells) {
  if (n < 2 * margin_cells + 2) throw Error(ErrorCode::InvalidInput, "resample grid too small");
  const Vec2 lo = sheet.grid().lo(), hi = sheet.grid().hi();
  const double cells = static_cast<double>(n - 1 - 2 * margin_cells);
  const double m = static_cast<double>(margin_cells);
  const Vec2 h{(hi.x1 - lo.x1) / cells, (hi.x2 - lo.x2) / cells};
  const Grid g(Vec2{lo.x1 - m * h.x1, lo.x2 - m * h.x2}, Vec2{hi.x1 + m * h.x1, hi.x2 + m * h.x2},
               n, n);
  return ParametricSheet(g, [&sheet](const Vec2& s) { return sheet.evaluate(s); });
}

ParametricSheet sample_graph(const GraphSurface& u, const Grid& grid) {
  return ParametricSheet(grid, [&u](const Vec2& x) -> std::optional<Vec3> {
    const double h = u.height(x);
    if (!std::isfinite(h)) return std::nullopt;
    return Vec3(x, h);
  });
}

void export_csv(const fs::path& path, const Grid& grid,
                const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                const std::vector<unsigned char>* valid) {
  for (const auto& [name, values] : columns) {
    if (values.size() != grid.size()) {
      throw Error(ErrorCode::IoError, "column " + name + " does not match the grid");
    }
  }
  std::ofstream out = open_out(path);
  out << "x1,x2";
  for (const auto& col : columns) out << "," << col.first;
  out << "\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Vec2 x = grid.point(k);
    const bool ok = grid.active(k) && (!valid || (*valid)[k]);
    out << fmt17(x.x1) << "," << fmt17(x.x2);
    for (const auto& col : columns) out << "," << (ok ? fmt17(col.second[k]) : "nan");
    out << "\n";
  }
  finish(out, path);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    if (header) {
      t.header = cells;
      header = false;
      continue;
    }
    std::vector<double> row;
    for (const std::string& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const std::streamsize n = in.gcount();
    if (n > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(n));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

// --- reports -----------------------------------------------------------------

bool RunReport::checks_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

namespace {

// JSON has no inf or nan; they become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Admissible C (null when unbounded), thickness range and the solver region size.
void record_design(RunReport& r, const PairDesign& p) {
  r.values["admissible_C_lo"] = p.admissible_C.lo;
  r.values["admissible_C_hi"] = p.admissible_C.hi;
  r.values["min_thickness"] = p.min_thickness();
  r.values["max_thickness"] = p.max_thickness();
  std::size_t solved = 0;
  for (std::size_t k = 0; k < p.nodes.values.size(); ++k) solved += p.nodes.ok(k);
  r.values["design_nodes"] = static_cast<double>(solved);
}

}  // namespace

std::string RunReport::to_json() const {
  json j;
  j["name"] = name;
  j["mode"] = mode;
  j["stage"] = stage;
  j["exit_code"] = exit_code;
  j["error_code"] = error_code ? json(*error_code) : json(nullptr);
  j["message"] = message;
  json cs = json::array();
  for (const CheckResult& c : checks) {
    cs.push_back({{"name", c.name}, {"value", num(c.value)}, {"tol", num(c.tol)}, {"pass", c.pass}});
  }
  j["checks"] = cs;
  json vs = json::object();
  for (const auto& [k, v] : values) vs[k] = num(v);
  j["values"] = vs;
  j["warnings"] = warnings;
  json ts = json::array();
  for (const TraceSummary& t : traces) {
    ts.push_back({{"name", t.name},
                  {"rays", t.rays},
                  {"failures", t.failures},
                  {"edge_hits", t.edge_hits},
                  {"extrapolated", t.extrapolated},
                  {"max_direction_error", num(t.max_direction_error)},
                  {"mean_direction_error", num(t.mean_direction_error)},
                  {"max_position_error", num(t.max_position_error)},
                  {"mean_position_error", num(t.mean_position_error)},
                  {"direction_tol", num(t.direction_tol)},
                  {"position_tol", t.position_tol ? num(*t.position_tol) : json(nullptr)},
                  {"failure_codes", t.failure_codes},
                  {"pass", t.pass}});
  }
  j["traces"] = ts;
  json fs_ = json::array();
  for (const FileEntry& f : files) {
    fs_.push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  }
  j["files"] = fs_;
  return j.dump(2) + "\n";
}

int exit_code_for(ErrorCode code) {
  switch (classify(code)) {
    case ErrorClass::Input: return 2;
    case ErrorClass::Condition: return 3;
    case ErrorClass::Solver: return 4;
    case ErrorClass::Io: return 4;
  }
  return 4;
}

// --- pipeline --------------------------------------------------------------------

namespace {

struct Built {
  std::optional<LensDesign> lens;
  std::optional<MirrorDesign> mirror;
  std::optional<GraphSurface> u;
  std::shared_ptr<IncidentField> field;
  std::shared_ptr<ImagingMap> map;
  Grid grid;

  PairDesign& pair() { return lens ? static_cast<PairDesign&>(*lens) : *mirror; }
  std::vector<OpticalElement> elements(SheetMode mode) const {
    return lens ? lens_elements(*lens, mode) : mirror_elements(*mirror, mode);
  }
  std::vector<OpticalElement> elements_with(const ParametricSheet& sigma2) const {
    if (lens) {
      LensDesign copy = *lens;
      copy.sigma2 = sigma2;
      return lens_elements(copy, SheetMode::Mesh);
    }
    MirrorDesign copy = *mirror;
    copy.sigma2 = sigma2;
    return mirror_elements(copy, SheetMode::Mesh);
  }
};

// A later result under the same name (solver after pre-check) replaces the earlier one.
void add_check(RunReport& r, std::string name, double value, double tol, bool pass) {
  for (CheckResult& c : r.checks) {
    if (c.name == name) {
      c = CheckResult{std::move(name), value, tol, pass};
      return;
    }
  }
  r.checks.push_back(CheckResult{std::move(name), value, tol, pass});
}

// value <= tol
void add_upper(RunReport& r, std::string name, double value, double tol) {
  add_check(r, std::move(name), value, tol, value <= tol);
}
// value > 0
void add_positive(RunReport& r, std::string name, double value) {
  add_check(r, std::move(name), value, 0.0, value > 0.0);
}

bool imaging_mode(Mode m) { return m == Mode::Imaging || m == Mode::ImagingMirror; }

// Constant C for imaging lenses, from d0 when C is not given.
double imaging_C(const DesignConfig& c, RunReport& r) {
  if (c.C) return *c.C;
  if (c.mode != Mode::Imaging || c.media.n1 != c.media.n3 || c.map.kind != "magnification") {
    throw Error(ErrorCode::ConfigError,
                "d0: only the same-index magnification lens derives C from d0");
  }
  const ThicknessPlan p =
      thickness_plan(*c.d0, c.map.alpha, max_radius(c.domain), c.media.kappa1());
  r.values["required_d0"] = p.required_d0;
  r.values["thickness_bound_margin"] = p.bound_margin;
  return p.C;
}

Domain default_image_domain(const DesignConfig& c) {
  if (c.image_domain) return *c.image_domain;
  if (c.map.kind == "identity") return c.domain;
  if (c.map.kind == "magnification") {
    const double s = 1.0 + c.map.alpha;
    if (c.domain.shape() == Domain::Shape::Disk) {
      return Domain::disk(s * c.domain.center(), std::abs(s) * c.domain.radius());
    }
    const Vec2 p = s * c.domain.lo(), q = s * c.domain.hi();
    return Domain::rectangle({std::min(p.x1, q.x1), std::min(p.x2, q.x2)},
                             {std::max(p.x1, q.x1), std::max(p.x2, q.x2)});
  }
  throw Error(ErrorCode::ConfigError, "image_domain: required when n1 < n3 for this map");
}

// Conditions only; fills checks and returns false if any gate fails.
void run_checks(const DesignConfig& c, RunReport& r, const Grid& grid) {
  if (!imaging_mode(c.mode)) {
    const IncidentField f = build_field(c.field, c.domain);
    const CurlReport curl = curl_check(f, grid, CurlOptions{c.tol.curl, 0.0});
    add_upper(r, "curl", curl.max_residual, c.tol.curl);
    if (!curl.conservative) {
      r.error_code = std::string(code_name(ErrorCode::CurlViolation));
    }
    return;
  }
  const ImagingMap T = build_map(c.map, c.a);
  if (c.mode == Mode::ImagingMirror) {
    const CompatibilityReport s = check_map_strict(T, grid, c.tol.map);
    double curl = 0.0;
    for (std::size_t k : grid.active_indices()) curl = std::max(curl, std::abs(s.I.values[k]));
    add_upper(r, "curl_S", curl, c.tol.map);
    if (curl > c.tol.map) r.error_code = std::string(code_name(ErrorCode::CurlViolation));
    return;
  }
  const double C = imaging_C(c, r);
  const double k1 = c.media.kappa1();
  if (c.media.n1 == c.media.n3) {
    const CompatibilityReport s = check_map_same_index(T, C, k1, grid, c.tol.map);
    add_upper(r, "map_compatibility", s.combo_residual, c.tol.map);
    add_positive(r, "bound_margin", s.bound_margin);
    if (!s.pass) r.error_code = std::string(code_name(ErrorCode::CurlViolation));
    return;
  }
  if (c.media.n1 > c.media.n3) {
    const CompatibilityReport s = check_map_strict(T, grid, c.tol.map);
    add_upper(r, "map_strict", s.combo_residual, c.tol.map);
    const Interval w = delta0_window(T, C, c.media, c.x0);
    r.values["delta0_window_hi"] = w.hi;
    add_positive(r, "delta0_window_margin", std::min(c.u0 - w.lo, w.hi - c.u0));
    if (!s.pass) r.error_code = std::string(code_name(ErrorCode::CurlViolation));
    return;
  }
  const Domain image = default_image_domain(c);
  const Grid image_grid(image, c.grid);
  const ImagingMap inv = T.inverted(grid);
  const CompatibilityReport s = check_map_strict(inv, image_grid, c.tol.map);
  add_upper(r, "inverse_map_strict", s.combo_residual, c.tol.map);
  if (!s.pass) r.error_code = std::string(code_name(ErrorCode::CurlViolation));
}

Built solve(const DesignConfig& c, RunReport& r, const Grid& grid) {
  Built b{{}, {}, {}, {}, {}, grid};
  DesignOptions design;
  design.curl.tol = c.tol.curl;

  if (!imaging_mode(c.mode)) {
    b.field = std::make_shared<IncidentField>(build_field(c.field, c.domain));
    const double C = *c.C;
    if (c.construction == "orthogonal") {
      const Potential h = build_potential(*b.field, c.domain.center(), grid, design.potential);
      b.lens = orthogonal_front(*b.field, h, c.sigma1.C_tilde, c.w, C, c.media, grid, design);
    } else {
      GraphSurface s1 = c.sigma1.kind == "expression"
                            ? GraphSurface::from_expression(
                                  Expression::parse(c.sigma1.expression), c.domain)
                            : GraphSurface::flat(c.sigma1.height, c.domain);
      b.u = s1;
      if (c.mode == Mode::FarFieldMirror) {
        b.mirror = design_far_field_mirrors(s1, *b.field, c.w, C, grid, design);
      } else if (c.construction == "vertical") {
        if (!b.field->is_vertical() || norm(c.w - kE3) > 1e-15) {
          throw Error(ErrorCode::InvalidInput, "vertical construction needs e = w = e3");
        }
        b.lens = vertical_design(s1, C, c.media, grid, design);
      } else {
        b.lens = design_far_field(s1, *b.field, c.w, C, c.media, grid, design);
      }
    }
    const PairDesign& p = b.pair();
    r.values["C"] = C;
    record_design(r, p);
    add_check(r, "compatibility_margin", p.compatibility_margin, 0.0,
              p.compatibility_margin >= 0.0);
    add_upper(r, "eikonal_spread", p.eikonal_spread, 1e-8);
    r.values["tangency_residual"] = p.tangency_residual;
    return b;
  }

  b.map = std::make_shared<ImagingMap>(build_map(c.map, c.a));
  b.field = std::make_shared<IncidentField>(constant_field(kE3, c.domain));
  const double C = imaging_C(c, r);
  r.values["C"] = C;

  if (c.mode == Mode::ImagingMirror) {
    ImagingOptions o;
    o.map_tol = c.tol.map;
    o.path_tol = c.tol.path;
    o.design = design;
    MirrorImaging m = solve_mirror_imaging(*b.map, C, c.x0, c.u0, grid, o);
    add_upper(r, "curl_S", m.curl_residual, c.tol.map);
    add_upper(r, "path_residual", m.path_residual, c.tol.path);
    b.u = m.u;
    b.mirror = std::move(m.mirrors);
  } else if (c.media.n1 == c.media.n3) {
    ImagingOptions o;
    o.map_tol = c.tol.map;
    o.path_tol = c.tol.path;
    o.design = design;
    ImagingLens L = solve_same_index(*b.map, C, c.media, c.x0, c.u0, grid, o);
    add_upper(r, "map_compatibility", L.compatibility.combo_residual, c.tol.map);
    add_positive(r, "bound_margin", L.compatibility.bound_margin);
    add_upper(r, "path_residual", L.path_residual, c.tol.path);
    add_upper(r, "pde_residual", L.pde_residual, c.tol.pde);
    b.u = L.u;
    b.lens = std::move(L.lens);
    if (auto alpha = b.map->magnification_alpha()) {
      const double k1 = c.media.kappa1();
      const GraphSurface probe = magnification_closed_form(*alpha, C, k1, 0.0, c.domain);
      const double A = b.u->height(c.x0) - probe.height(c.x0);
      const GraphSurface closed = magnification_closed_form(*alpha, C, k1, A, c.domain);
      double ell = 0.0, gap = 0.0;
      for (std::size_t k : grid.active_indices()) {
        const Vec2 x = grid.point(k);
        ell = std::max(ell, std::abs(ellipsoid_residual(*alpha, C, k1, A, x, b.u->height(x))));
        gap = std::max(gap, std::abs(b.u->height(x) - closed.height(x)));
      }
      add_upper(r, "ellipsoid_residual", ell, 1e-10);
      add_upper(r, "closed_form_gap", gap, c.tol.path);
      r.values["A"] = A;
      if (c.entry == "closed_form") {
        b.u = closed;
        b.lens = vertical_design(closed, C, c.media, grid, design);
      }
    } else if (c.entry == "closed_form") {
      throw Error(ErrorCode::ConfigError, "entry: closed_form needs a magnification map");
    }
  } else if (c.media.n1 > c.media.n3) {
    QuasilinearOptions o;
    o.map_tol = c.tol.map;
    o.design = design;
    QuasilinearResult q = solve_quasilinear(*b.map, C, c.media, c.x0, c.u0, grid, o);
    add_upper(r, "map_strict", q.strict.combo_residual, c.tol.map);
    add_upper(r, "pde_residual", q.pde_residual_fd, c.tol.pde);
    add_upper(r, "transposed_disagreement", q.transposed_disagreement, o.path_tol);
    add_positive(r, "window_margin", q.min_window_margin);
    r.values["accepted_nodes"] = static_cast<double>(q.accepted);
    r.values["active_nodes"] = static_cast<double>(grid.active_count());
    r.values["richardson_error"] = q.richardson_error;
    b.u = q.u;
    b.lens = std::move(q.lens);
  } else {
    QuasilinearOptions o;
    o.map_tol = c.tol.map;
    o.design = design;
    const Grid image_grid(default_image_domain(c), c.grid);
    ReverseLens R =
        solve_reverse_index(*b.map, C, c.media, (*b.map)(c.x0), c.u0, grid, image_grid, o);
    add_upper(r, "inverse_map_strict", R.reversed.strict.combo_residual, c.tol.map);
    add_upper(r, "pde_residual", R.reversed.pde_residual_fd, c.tol.pde);
    add_upper(r, "transposed_disagreement", R.reversed.transposed_disagreement, o.path_tol);
    add_positive(r, "window_margin", R.reversed.min_window_margin);
    r.values["accepted_nodes"] = static_cast<double>(R.reversed.accepted);
    b.lens = std::move(R.lens);
  }
  record_design(r, b.pair());
  return b;
}

TraceTarget target_for(const DesignConfig& c, const Built& b) {
  TraceTarget t;
  t.direction = imaging_mode(c.mode) ? kE3 : normalized(c.w);
  if (imaging_mode(c.mode)) {
    t.plane = c.a;
    auto m = b.map;
    t.landing = [m](const Vec2& x) { return (*m)(x); };
  } else {
    double top = 0.0;
    const ParametricSheet& s = b.lens ? b.lens->sigma2 : b.mirror->sigma2;
    for (std::size_t k = 0; k < s.points().size(); ++k) {
      if (s.valid(k)) top = std::max(top, s.points()[k].z);
    }
    t.plane = top + 1.0;
  }
  return t;
}

TraceSummary summarize(std::string name, const TraceReport& rep, double dir_tol,
                       std::optional<double> pos_tol) {
  TraceSummary s;
  s.name = std::move(name);
  s.rays = rep.rows.size();
  s.failures = rep.failures;
  s.edge_hits = rep.edge_hits;
  s.extrapolated = rep.extrapolated;
  s.max_direction_error = rep.max_direction_error;
  s.mean_direction_error = rep.mean_direction_error;
  s.max_position_error = rep.max_position_error;
  s.mean_position_error = rep.mean_position_error;
  s.direction_tol = dir_tol;
  s.position_tol = pos_tol;
  for (const TraceRow& row : rep.rows) {
    if (row.failure) ++s.failure_codes[std::string(code_name(*row.failure))];
  }
  s.pass = rep.failures == 0 && rep.max_direction_error <= dir_tol &&
           (!pos_tol || rep.max_position_error <= *pos_tol);
  return s;
}

void record_file(RunReport& r, const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  r.files.push_back(FileEntry{name, fs::file_size(p), sha256_file(p)});
}

// Exported meshes reach this many cells past the design extent; without it the rim
// cells only have one-sided normals and rim rays land ~1e-2 off at 257 nodes.
constexpr std::size_t kMeshMargin = 3;

void write_outputs(const DesignConfig& c, RunReport& r, Built& b, const fs::path& dir) {
  const PairDesign& p = b.pair();
  const ParametricSheet mesh = resample(p.sigma2, c.mesh_grid, kMeshMargin);
  export_obj(mesh, dir / "sigma2.obj");
  record_file(r, dir, "sigma2.obj");

  if (const auto* s = std::get_if<GraphSurface>(&p.sigma1)) {
    export_obj(sample_graph(*s, mesh.grid()), dir / "sigma1.obj");
  } else {
    export_obj(resample(std::get<ParametricSheet>(p.sigma1), c.mesh_grid, kMeshMargin),
               dir / "sigma1.obj");
  }
  record_file(r, dir, "sigma1.obj");

  const GridData<double> d = p.thickness();
  export_csv(dir / "thickness.csv", d.grid, {{"d", d.values}}, &d.valid);
  record_file(r, dir, "thickness.csv");
  if (b.u) {
    std::vector<double> u(b.grid.size(), kNaN);
    for (std::size_t k : b.grid.active_indices()) u[k] = b.u->height(b.grid.point(k));
    export_csv(dir / "u.csv", b.grid, {{"u", u}});
    record_file(r, dir, "u.csv");
  }
}

}  // namespace

RunReport run_design(const DesignConfig& c, Stage stage, const std::optional<fs::path>& out_dir) {
  RunReport r;
  r.name = c.name;
  r.mode = std::string(mode_name(c.mode));
  r.stage = std::string(stage_name(stage));
  try {
    if (out_dir) fs::create_directories(*out_dir);
    if (stage != Stage::Check && !out_dir && stage != Stage::Design) {
      throw Error(ErrorCode::ConfigError, "--out-dir is required for " + r.stage);
    }
    const Grid grid(c.domain, c.grid);
    r.values["grid"] = static_cast<double>(c.grid);
    r.values["active_nodes"] = static_cast<double>(grid.active_count());

    run_checks(c, r, grid);
    if (stage == Stage::Check) {
      if (!r.checks_pass()) {
        r.exit_code = 3;
        if (!r.error_code) r.error_code = std::string(code_name(ErrorCode::CompatibilityViolation));
        r.message = "condition check failed";
      }
    } else {
      Built b = solve(c, r, grid);
      r.warnings = b.pair().warnings;
      const TraceTarget target = target_for(c, b);
      const auto sources = sample_points(c.domain, c.rays, c.seed);
      const std::optional<double> pos =
          imaging_mode(c.mode) ? std::optional<double>(c.tol.trace_position) : std::nullopt;
      const std::optional<double> mesh_pos =
          imaging_mode(c.mode) ? std::optional<double>(c.tol.mesh_position) : std::nullopt;

      if (stage == Stage::Design) {
        const auto els = b.elements(SheetMode::Exact);
        r.traces.push_back(summarize("exact", trace_field(*b.field, sources, els, target),
                                     c.tol.trace_direction, pos));
      }
      if (out_dir && (stage == Stage::Design || stage == Stage::Export)) {
        write_outputs(c, r, b, *out_dir);
      }
      if (stage == Stage::Design || stage == Stage::Trace) {
        if (!out_dir) {
          // No files: trace the in-memory re-sampled mesh instead.
          const ParametricSheet mesh = resample(b.pair().sigma2, c.mesh_grid, kMeshMargin);
          r.traces.push_back(summarize("mesh", trace_field(*b.field, sources,
                                                           b.elements_with(mesh), target),
                                       c.tol.mesh_direction, mesh_pos));
        } else {
          const ParametricSheet mesh = import_obj(*out_dir / "sigma2.obj");
          r.traces.push_back(summarize("mesh", trace_field(*b.field, sources,
                                                           b.elements_with(mesh), target),
                                       c.tol.mesh_direction, mesh_pos));
        }
      }
      if (!r.checks_pass()) {
        r.exit_code = 3;
        r.error_code = std::string(code_name(ErrorCode::CompatibilityViolation));
        r.message = "a residual check exceeded its tolerance";
      } else if (std::any_of(r.traces.begin(), r.traces.end(),
                             [](const TraceSummary& t) { return !t.pass; })) {
        r.exit_code = 5;
        r.message = "trace errors exceed tolerance";
      }
    }
  } catch (const Error& e) {
    r.exit_code = exit_code_for(e.code());
    r.error_code = std::string(code_name(e.code()));
    r.message = e.what();
    if (e.where()) {
      r.values["error_x1"] = e.where()->x1;
      r.values["error_x2"] = e.where()->x2;
    }
  } catch (const fs::filesystem_error& e) {
    r.exit_code = 4;
    r.error_code = std::string(code_name(ErrorCode::IoError));
    r.message = e.what();
  }
  if (out_dir) {
    try {
      const fs::path p = *out_dir / (stage == Stage::Trace ? "trace_report.json" : "report.json");
      std::ofstream out = open_out(p);
      out << r.to_json();
      finish(out, p);
    } catch (const std::exception& e) {
      if (r.exit_code == 0) {
        r.exit_code = 4;
        r.error_code = std::string(code_name(ErrorCode::IoError));
        r.message = e.what();
      }
    }
  }
  return r;
}

}  // namespace freeform
