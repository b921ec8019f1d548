#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kcp/config.hpp"
#include "kcp/conflict.hpp"
#include "kcp/context.hpp"
#include "kcp/corpus.hpp"
#include "kcp/negatives.hpp"
#include "kcp/pairs.hpp"
#include "kcp/probe.hpp"

namespace kcp {

// Exclusive advisory lock on an output directory; the file is created
// O_EXCL and removed on destruction, so two builds cannot interleave
// writes into the same tree.
class LockFile {
  public:
    explicit LockFile(const std::filesystem::path& path);
    ~LockFile();
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;

  private:
    std::filesystem::path path_;
    int fd_ = -1;
};

struct StageStatus {
    std::string name;
    std::string stage_key;   // content hash of inputs + parameters
    std::string output_hash;
    std::size_t processed = 0;
    std::size_t quarantined = 0;
    bool reused = false;  // satisfied from a previous run's marker
};

struct BuildOutcome {
    std::string snapshot_id;
    std::vector<StageStatus> stages;
    BalanceReport report;
    ExportPaths exports;
    std::filesystem::path manifest_path;
    json statistics;
};

// The whole dataset build: ingest -> probe -> forge -> contexts ->
// negatives -> assemble -> export, with stage-level reuse, per-record
// quarantine, and a run manifest free of timestamps so reruns are
// byte-identical. Throws ValidationError when a stage's quarantine
// fraction exceeds the configured threshold (artifacts are persisted
// first).
BuildOutcome run_build(const RunConfig& config);

struct SweepRow {
    double target = 0.0;
    std::optional<double> realized;
    std::map<std::string, std::size_t> counts;
    std::filesystem::path dir;
    std::string error;  // set when this target was unreachable
};

// Reuses the built stages and re-runs assembly + export once per target
// ratio into out/sweep/r_<target>/. Unreachable targets are reported in
// their row; the sweep continues.
std::vector<SweepRow> run_sweep(const RunConfig& config);

struct LoadedDataset {
    CorpusSnapshot snapshot;
    std::map<std::string, ParameterAnswer> alphas_by_qid;
    std::vector<ConflictAnswer> conflicts;
    std::vector<ContextPackage> contexts;
    std::vector<NegativeSample> negatives;
    json run_manifest;
};

LoadedDataset load_dataset(const std::filesystem::path& out_dir);

// A question may carry several conflicting contexts; the conflict answer
// for a context is resolved by position (base id -> first record for the
// question, "+ctf" suffix -> second).
std::map<std::string, ConflictAnswer> conflicts_by_context(
    const std::vector<ContextPackage>& contexts, const std::vector<ConflictAnswer>& conflicts);

AssembleInputs make_assemble_inputs(const LoadedDataset& data);

struct ValidationIssue {
    std::string check;
    std::string subject;
    std::string detail;
};

// Re-derives every dataset invariant from the persisted artifacts alone:
// context composition, conflict conditions, substitution residue, negative
// validity, template conformance, pair-core provenance, ratio and length
// balance. Reports at most one issue per record per check. An empty
// dataset validates with zero issues.
std::vector<ValidationIssue> validate_dataset(const std::filesystem::path& out_dir);

}  // namespace kcp
