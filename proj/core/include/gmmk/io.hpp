#ifndef GMMK_IO_HPP_
#define GMMK_IO_HPP_

#include <gmmk/grouped_data.hpp>
#include <gmmk/optimizer.hpp>
#include <gmmk/prediction.hpp>
#include <gmmk/simulate.hpp>
#include <gmmk/spectral.hpp>
#include <gmmk/types.hpp>

#include <string>
#include <vector>

namespace gmmk {

// raised for malformed files or unknown columns; the CLI maps it to exit 2
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> columns;

  index_t num_rows() const { return columns.empty() ? 0 : columns[0].size(); }
  index_t column_index(const std::string& name) const;  // throws SchemaError
  vec_t numeric_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& columns);

// 17 significant digits, round-trip safe
std::string format_double(double x);

struct ModelColumns {
  std::string response;
  std::vector<std::string> covariates;  // intercept added automatically
  std::vector<std::string> groups;
};

// assembles a GroupedDesign from a table; missing categorical values become
// their own level ("" is a valid label)
GroupedDesign design_from_table(const CsvTable& table, const ModelColumns& cols);

void write_dataset_csv(const std::string& path, const vec_t& y, const den_mat_t& X,
                       const std::vector<std::vector<std::string>>& labels);
void write_truth_json(const std::string& path, const SimConfig& cfg,
                      const SimTruth& truth, const std::vector<index_t>& m_k);
void write_fit_json(const std::string& path, const FitResult& fit,
                    const ModelColumns& cols);
FitResult read_fit_json(const std::string& path, ModelColumns* cols = nullptr);
void write_predictions_csv(const std::string& path, const PredictiveDist& dist,
                           LikelihoodKind kind);
void write_spectral_json(const std::string& path,
                         const std::vector<SpectralReport>& spectra,
                         const TheoremReport& theorems, bool full_spectrum);

}  // namespace gmmk

#endif  // GMMK_IO_HPP_
