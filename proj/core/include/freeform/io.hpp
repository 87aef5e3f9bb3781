#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freeform/domain.hpp"
#include "freeform/error.hpp"
#include "freeform/farfield.hpp"
#include "freeform/imaging.hpp"
#include "freeform/surface.hpp"
#include "freeform/vec.hpp"

namespace freeform {

enum class Mode { FarField, Imaging, FarFieldMirror, ImagingMirror };
std::string_view mode_name(Mode mode);

struct FieldSpec {
  /// constant | point_source | swirl | gradient
  std::string kind = "constant";
  Vec3 direction = kE3;
  Vec3 point{0.0, 0.0, -1.0};
  double strength = 0.0;
  std::string potential;
};

struct EntrySpec {
  /// flat | expression | orthogonal
  std::string kind = "flat";
  double height = 1.0;
  std::string expression;
  double C_tilde = 0.0;
};

struct MapSpec {
  /// identity | magnification | axis | affine | custom
  std::string kind = "identity";
  double alpha = 0.0;
  std::string h;
  Mat2 matrix = Mat2::identity();
  Vec2 offset;
  std::string t1;
  std::string t2;
};

struct Tolerances {
  double curl = 1e-6;
  double map = 1e-8;
  double path = 1e-8;
  double pde = 1e-6;
  double trace_direction = 1e-7;
  double trace_position = 1e-6;
  double mesh_position = 5e-4;
  double mesh_direction = 1e-3;
};

/// "name=value" pairs separated by commas, e.g. "trace_position=1e-5,curl=1e-4".
/// Throws ConfigError on an unknown name or a bad number.
void apply_overrides(Tolerances& tol, std::string_view overrides);

struct DesignConfig {
  std::string name = "design";
  Mode mode = Mode::FarField;
  Media media;
  Domain domain = Domain::disk({0.0, 0.0}, 1.0);
  std::size_t grid = 65;
  /// Resolution of the exported second-face mesh.
  std::size_t mesh_grid = 129;

  // Far field.
  FieldSpec field;
  EntrySpec sigma1;
  /// general | orthogonal | vertical
  std::string construction = "general";
  Vec3 w = kE3;

  // Imaging.
  MapSpec map;
  double a = 1.0;
  Vec2 x0;
  /// u(x0); the quasilinear solver calls it delta0.
  double u0 = 1.0;
  std::optional<double> d0;
  /// line_integral | closed_form (magnification with n1 = n3 only)
  std::string entry = "line_integral";
  /// Image-side domain for n1 < n3; defaults to the magnified source domain.
  std::optional<Domain> image_domain;

  std::optional<double> C;
  std::size_t rays = 1000;
  std::uint64_t seed = 7;
  Tolerances tol;
};

/// Throws ConfigError naming the offending field (or the line for syntax errors).
DesignConfig parse_config(std::string_view json_text, const std::string& source = "<config>");
DesignConfig load_config(const std::filesystem::path& path);

ImagingMap build_map(const MapSpec& spec, double a);
IncidentField build_field(const FieldSpec& spec, const Domain& domain);

// --- export ----------------------------------------------------------------

/// Wavefront OBJ: one vertex per valid node (row-major), "vt i j" carrying the grid
/// indices, two counter-clockwise triangles per fully valid cell. The grid is recorded
/// in a comment line so the file can be read back. Byte-identical for identical input.
void export_obj(const ParametricSheet& sheet, const std::filesystem::path& path);
ParametricSheet import_obj(const std::filesystem::path& path);

/// Re-samples the sheet's exact map on an n x n grid over its extent, grown by
/// `margin_cells` mesh cells on every side so rays near the rim land in cells with
/// centred normals. Nodes where the map fails are left invalid.
ParametricSheet resample(const ParametricSheet& sheet, std::size_t n,
                         std::size_t margin_cells = 0);
/// Graph surface sampled on the grid.
ParametricSheet sample_graph(const GraphSurface& u, const Grid& grid);

/// Header "x1,x2,<names>", one row per node, 17 significant digits, nan where invalid.
void export_csv(const std::filesystem::path& path, const Grid& grid,
                const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                const std::vector<unsigned char>* valid = nullptr);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& path);

// --- reports ----------------------------------------------------------------

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct TraceSummary {
  std::string name;
  std::size_t rays = 0;
  std::size_t failures = 0;
  std::size_t edge_hits = 0;
  std::size_t extrapolated = 0;
  double max_direction_error = 0.0;
  double mean_direction_error = 0.0;
  double max_position_error = 0.0;
  double mean_position_error = 0.0;
  double direction_tol = 0.0;
  /// Unset when landing points are not checked (far field).
  std::optional<double> position_tol;
  /// Failed rays per error code name.
  std::map<std::string, std::size_t> failure_codes;
  bool pass = false;
};

struct FileEntry {
  std::string path;
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct RunReport {
  std::string name;
  std::string mode;
  std::string stage;
  int exit_code = 0;
  std::optional<std::string> error_code;
  std::string message;
  std::vector<CheckResult> checks;
  std::map<std::string, double> values;
  std::vector<std::string> warnings;
  std::vector<TraceSummary> traces;
  std::vector<FileEntry> files;

  bool checks_pass() const;
  std::string to_json() const;
};

/// 0 success, 2 config/input, 3 condition violation, 4 solver failure, 5 trace tolerance.
int exit_code_for(ErrorCode code);

enum class Stage { Check, Design, Export, Trace };
std::string_view stage_name(Stage stage);

/// check: conditions only. design: solve, trace (exact and through the exported
/// second-face mesh), export. export: solve and write files. trace: solve the entry
/// face again and re-trace the second face read from out_dir/sigma2.obj.
/// Errors are captured in the report; report.json is written to out_dir when given.
RunReport run_design(const DesignConfig& config, Stage stage,
                     const std::optional<std::filesystem::path>& out_dir);

}  // namespace freeform
