#pragma once

#include <string>

#include "qflow/auction.hpp"
#include "qflow/index_policy.hpp"
#include "qflow/model_based.hpp"

// Versioned textual artifact files. Kernel/value rows carry probabilities at
// 9 decimal places; loaders renormalize kernel rows so they sum to 1 exactly.

namespace qflow::io {

void save_client_kernel(const std::string& path, const model::ClientKernel& k, double gamma);
model::ClientKernel load_client_kernel(const std::string& path);

void save_traces(const std::string& path, const model::TraceLog& traces);
model::TraceLog load_traces(const std::string& path);

struct SystemArtifacts {
    model::FrequentStateSet sp;
    std::vector<std::vector<int>> actions;
    model::SystemKernel kernel;
    double gamma = 0.95;
};

void save_system(const std::string& path, const SystemArtifacts& sys);
SystemArtifacts load_system(const std::string& path);

void save_values(const std::string& path, const model::ValueSolution& sol, int n_actions,
                 double gamma);
model::ValueSolution load_values(const std::string& path);

struct MfgArtifacts {
    auction::BidSet bids;
    auction::BidDistribution rho;
    auction::MfgSolution solution;
    double gamma = 0.95;
};

void save_mfg(const std::string& path, const MfgArtifacts& mfg);
MfgArtifacts load_mfg(const std::string& path);

void save_index(const std::string& path, const indexing::IndexTable& table);
indexing::IndexTable load_index(const std::string& path);

}  // namespace qflow::io
