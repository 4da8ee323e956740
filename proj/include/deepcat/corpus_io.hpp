#pragma once

// Corpus and taxonomy files are JSON lines. The first line is a header
// object {"format": ..., "version": 1, ...}; every following line is one
// record. See docs/formats.md.

#include "deepcat/corpus.hpp"

#include <filesystem>

namespace deepcat {

inline constexpr int kCorpusFormatVersion = 1;
inline constexpr int kTaxonomyFormatVersion = 1;

void write_corpus(const std::filesystem::path& path, const std::vector<QueryRecord>& records);
/// Buckets are recomputed from frequency on read.
std::vector<QueryRecord> read_corpus(const std::filesystem::path& path);

void write_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy);
Taxonomy read_taxonomy(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace deepcat
