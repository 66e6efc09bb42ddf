#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pfinv {

class TriMesh;

/// One real value per mesh vertex, bound to the mesh it was built on.
class NodalField {
 public:
  NodalField() = default;
  /// Zero field on the mesh.
  explicit NodalField(const TriMesh& mesh);
  NodalField(const TriMesh& mesh, std::vector<double> values);
  NodalField(const TriMesh& mesh, double constant);

  std::size_t size() const { return values_.size(); }
  std::uint64_t mesh_id() const { return mesh_id_; }
  bool bound_to(const TriMesh& mesh) const;

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// Same values bound to another mesh with the same vertex count.
  NodalField rebound(const TriMesh& mesh) const;

 private:
  std::vector<double> values_;
  std::uint64_t mesh_id_ = 0;
};

/// Throws ValidationError unless the field belongs to the mesh.
void require_bound(const NodalField& field, const TriMesh& mesh, const char* what);

// Plain-text format: "field N" followed by N values, one per line.
void write_field(std::ostream& out, std::span<const double> values);
std::vector<double> read_field(std::istream& in);
void save_field(const std::string& path, std::span<const double> values);
std::vector<double> load_field(const std::string& path);

}  // namespace pfinv
