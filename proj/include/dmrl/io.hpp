#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmrl/evaluate.hpp"
#include "dmrl/labeler.hpp"
#include "dmrl/sampler.hpp"
#include "dmrl/trainer.hpp"

namespace dmrl {

using json = nlohmann::json;

// JSON conversions. Readers throw FormatError on missing or mistyped fields.
json to_json(const QAItem& item);
QAItem item_from_json(const json& j);
json to_json(const LabeledItem& item);
LabeledItem labeled_from_json(const json& j);
json to_json(const Discarded& d);
json to_json(const LabelStats& s);
json to_json(const StepMetrics& m);
StepMetrics metrics_from_json(const json& j);
json to_json(const StratumStats& s);
json to_json(const EvalRecord& r);
EvalRecord record_from_json(const json& j);
json to_json(const EvalReport& r);
EvalReport report_from_json(const json& j);
json to_json(const RolloutGroup& g, const ResponseGrammar& grammar);

/// Writes one compact JSON object per line.
void write_jsonl(const std::string& path, const std::vector<json>& rows);

/// Calls fn(object, line_number) for each nonblank line. Parse errors and
/// exceptions thrown by fn are rethrown as FormatError("path:line: ...").
void read_jsonl(const std::string& path, const std::function<void(const json&, int)>& fn);

void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

void write_items(const std::string& path, const std::vector<QAItem>& items);
std::vector<QAItem> read_items(const std::string& path);
void write_labeled(const std::string& path, const std::vector<LabeledItem>& items);
std::vector<LabeledItem> read_labeled(const std::string& path);
void write_discards(const std::string& path, const std::vector<Discarded>& discarded);
void write_train_log(const std::string& path, const std::vector<StepMetrics>& log);
std::vector<StepMetrics> read_train_log(const std::string& path);

/// Writes text to a file, replacing it.
void write_text(const std::string& path, const std::string& text);

}  // namespace dmrl
