#include "pfinv/field.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

#include "pfinv/errors.hpp"
#include "pfinv/mesh.hpp"

namespace pfinv {

NodalField::NodalField(const TriMesh& mesh)
    : values_(static_cast<std::size_t>(mesh.num_vertices()), 0.0), mesh_id_(mesh.id()) {}

NodalField::NodalField(const TriMesh& mesh, std::vector<double> values)
    : values_(std::move(values)), mesh_id_(mesh.id()) {
  if (values_.size() != static_cast<std::size_t>(mesh.num_vertices())) {
    throw ValidationError("field length " + std::to_string(values_.size()) + " does not match vertex count " +
                          std::to_string(mesh.num_vertices()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("field contains a non-finite value");
  }
}

NodalField::NodalField(const TriMesh& mesh, double constant)
    : values_(static_cast<std::size_t>(mesh.num_vertices()), constant), mesh_id_(mesh.id()) {}

bool NodalField::bound_to(const TriMesh& mesh) const {
  return mesh_id_ == mesh.id() && values_.size() == static_cast<std::size_t>(mesh.num_vertices());
}

NodalField NodalField::rebound(const TriMesh& mesh) const { return NodalField(mesh, values_); }

void require_bound(const NodalField& field, const TriMesh& mesh, const char* what) {
  if (!field.bound_to(mesh)) throw ValidationError(std::string(what) + ": field is not bound to this mesh");
}

void write_field(std::ostream& out, std::span<const double> values) {
  out << std::setprecision(17) << "field " << values.size() << '\n';
  for (double v : values) out << v << '\n';
}

std::vector<double> read_field(std::istream& in) {
  std::string tag;
  long long n = 0;
  if (!(in >> tag >> n) || tag != "field" || n < 0) throw ValidationError("field file: expected 'field N'");
  std::vector<double> values(static_cast<std::size_t>(n));
  for (double& v : values) {
    if (!(in >> v)) throw ValidationError("field file: truncated value list");
  }
  return values;
}

void save_field(const std::string& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_field(out, values);
}

std::vector<double> load_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  return read_field(in);
}

}  // namespace pfinv
