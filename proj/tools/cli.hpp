#pragma once

#include <string>
#include <vector>

#include "pfinv/config.hpp"

namespace pfinv::cli {

enum ExitCode {
  kSuccess = 0,
  kUnexpected = 1,
  kValidation = 2,
  kSolver = 3,
  kVerification = 4,
};

/// Entry point of the command-line tool; returns the process exit code.
int run(int argc, const char* const* argv);

/// Measurement file: header "vertex,x,y,value" and one row per boundary vertex.
void save_measurement_csv(const std::string& path, const TriMesh& mesh, const NodalField& y_meas);
NodalField load_measurement_csv(const std::string& path, const TriMesh& mesh);

/// Reads mesh.txt and measurement_<i>.csv from a directory written by generate.
std::vector<MeasurementSource> load_measurements(const std::string& dir, const TriMesh& mesh,
                                                 const std::vector<SourceTerm>& sources);

}  // namespace pfinv::cli
