#pragma once

// Wire-protocol JSON schemas. Mirrors schemas/*.schema.json; a test keeps
// the two in sync.

#include <map>
#include <string>

namespace ccac::schema {

inline const std::map<std::string, std::string>& protocol_schemas() {
  static const std::map<std::string, std::string> s{
      {"suggest_request", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"SuggestRequest","type":"object","required":["prefix"],"properties":{"prefix":{"type":"string","minLength":1},"n":{"type":"integer","minimum":1,"maximum":64},"do_sample":{"type":"boolean"},"temperature":{"type":"number","exclusiveMinimum":0,"maximum":100},"top_k":{"type":["integer","null"],"minimum":1},"top_p":{"type":["number","null"],"exclusiveMinimum":0,"maximum":1},"max_new_words":{"type":"integer","minimum":1,"maximum":72},"backend":{"type":"string"},"seed":{"type":"integer","minimum":0}},"additionalProperties":false})json"},
      {"suggest_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"SuggestResponse","type":"object","required":["candidates","backend","latency_ms"],"properties":{"candidates":{"type":"array","items":{"type":"object","required":["text","completion","logprob","stop"],"properties":{"text":{"type":"string"},"completion":{"type":"string"},"logprob":{"type":"number","maximum":0},"stop":{"enum":["eos","word_budget","max_len"]}},"additionalProperties":false}},"backend":{"type":"string"},"latency_ms":{"type":"number","minimum":0}},"additionalProperties":false})json"},
      {"next_request", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"NextRequest","type":"object","required":["context_words"],"properties":{"context_words":{"type":"array","items":{"type":"string"}}},"additionalProperties":false})json"},
      {"next_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"NextResponse","type":"object","required":["vocab_ids","probs"],"properties":{"vocab_ids":{"type":"array","items":{"type":"integer","minimum":0}},"probs":{"type":"array","items":{"type":"number","minimum":0,"maximum":1}},"tokens":{"type":"array","items":{"type":"string"}}},"additionalProperties":false})json"},
      {"logprobs_request", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"LogprobsRequest","type":"object","required":["sentences"],"properties":{"sentences":{"type":"array","items":{"type":"string"}}},"additionalProperties":false})json"},
      {"logprobs_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"LogprobsResponse","type":"object","required":["items"],"properties":{"items":{"type":"array","items":{"type":"object","required":["tokens","logprobs"],"properties":{"tokens":{"type":"array","items":{"type":"string"},"minItems":2},"logprobs":{"type":"array","items":{"type":"number","maximum":0},"minItems":1}},"additionalProperties":false}}},"additionalProperties":false})json"},
      {"embed_request", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"EmbedRequest","type":"object","required":["sentences"],"properties":{"sentences":{"type":"array","items":{"type":"string"}},"mode":{"enum":["contextual","static"]}},"additionalProperties":false})json"},
      {"embed_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"EmbedResponse","type":"object","required":["items"],"properties":{"items":{"type":"array","items":{"type":"object","required":["tokens","vectors"],"properties":{"tokens":{"type":"array","items":{"type":"string"},"minItems":1},"vectors":{"type":"array","minItems":1,"items":{"type":"array","minItems":1,"items":{"type":"number"}}}},"additionalProperties":false}}},"additionalProperties":false})json"},
      {"vocab_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"VocabResponse","type":"object","required":["tokens","hash"],"properties":{"tokens":{"type":"array","items":{"type":"string"},"minItems":4},"hash":{"type":"string"}},"additionalProperties":false})json"},
      {"healthz_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"Healthz","type":"object","required":["status","backend","model_hash"],"properties":{"status":{"type":"string"},"backend":{"type":"string"},"model_hash":{"type":"string"},"eos_reliable":{"type":"boolean"}},"additionalProperties":false})json"},
      {"job_request", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"EvaluationJobRequest","type":"object","required":["seeds","embeddings"],"properties":{"seeds":{"type":"string","minLength":1},"references":{"type":"string"},"candidates":{"type":"string"},"backend":{"type":"string"},"metric":{"enum":["bertscore","cosine"]},"embeddings":{"type":"string","minLength":1},"aggregate":{"enum":["mean","min","max"]},"seed":{"type":"integer","minimum":0}},"additionalProperties":false})json"},
      {"job_status", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"JobStatus","type":"object","required":["id","status","done","total"],"properties":{"id":{"type":"string"},"status":{"enum":["queued","running","done","failed"]},"done":{"type":"integer","minimum":0},"total":{"type":"integer","minimum":0},"report":{"type":"object"},"error":{"type":"string"}},"additionalProperties":false})json"},
      {"error_response", R"json({"$schema":"http://json-schema.org/draft-07/schema#","title":"Error","type":"object","required":["error","message"],"properties":{"error":{"type":"string"},"message":{"type":"string"}},"additionalProperties":false})json"},
  };
  return s;
}

}  // namespace ccac::schema
