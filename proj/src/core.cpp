#include "switchsynth/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace switchsynth {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::SingularM: return "SingularM";
    case ErrorCode::CenterMismatch: return "CenterMismatch";
    case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::UnboundedHorizon: return "UnboundedHorizon";
    case ErrorCode::NotInFragment: return "NotInFragment";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SingularAlgebraicBlock: return "SingularAlgebraicBlock";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NameCollision: return "NameCollision";
    case ErrorCode::StepMisaligned: return "StepMisaligned";
    case ErrorCode::EmptyHorizon: return "EmptyHorizon";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double lambda_max_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double lambda_min_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_abscissa(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Matrix& a) { return a.rows() == 0 || spectral_abscissa(a) < 0.0; }

Matrix select(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

Vector select(const Vector& v, const std::vector<int>& idx) {
  Vector out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

}  // namespace switchsynth
