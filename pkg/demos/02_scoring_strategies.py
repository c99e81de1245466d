"""The four pointwise scoring strategies, demonstrated on a mock backend.

Each strategy turns a (query, passage) pair into a relevance probability:

  direct            decision token read immediately
  reason            generate a think block, then decide
  forced_no_reason  think block pre-filled, decision forced
  self_consistency  n sampled think blocks, scores averaged

Run:  python demos/02_scoring_strategies.py
"""

from reranklab import (
    DEFAULT_TEMPLATE,
    MockBackend,
    Passage,
    PromptMode,
    Query,
    SamplingParams,
    assemble_prompt,
    score_direct,
    score_forced,
    score_reasoned,
    score_self_consistency,
)

query = Query("q1", "how to help a jammed finger")
passage = Passage("p1", "A broken finger is often more painful than a jammed finger, "
                        "although both may be treated using a splint.")

# --- what the model actually sees ----------------------------------------
print("=== direct prompt (ends at the assistant turn) ===")
print(assemble_prompt(DEFAULT_TEMPLATE, query.text, passage.text, PromptMode.DIRECT))
print("=== forced think block (reasoning disabled) ===")
print(assemble_prompt(DEFAULT_TEMPLATE, query.text, passage.text, PromptMode.FORCED_THINK))

# --- a mock that mimics the typical behaviours ----------------------------
# direct prompts get a moderate, calibrated-looking score; once a generated
# think block concludes "true", the conditioned decision saturates, with
# hedged chains ("somewhat relevant") staying a little softer
def score_fn(prompt):
    if "it is clearly relevant" in prompt:
        return (6.9, 0.0)     # confident chain: nearly certain
    if "it is somewhat relevant" in prompt:
        return (1.0, 0.0)     # hedged chain: softer
    if "Okay, I have finished thinking." in prompt:
        return (1.45, 0.0)    # forced block: confident but not saturated
    return (-0.5, 0.0)        # direct read: leans negative, keeps nuance


def generate_fn(prompt, seed):
    hedge = "somewhat" if (seed or 0) % 2 else "clearly"
    return (f"Okay, the passage does mention a splint, so it is {hedge} "
            f"relevant. The answer is true.</think>")


mock = MockBackend(score_fn=score_fn, generate_fn=generate_fn)
sampling = SamplingParams(temperature=0.7, top_p=0.95, max_tokens=128)

print("=== scores ===")
direct = score_direct(mock, DEFAULT_TEMPLATE, query, passage)
print(f"direct            R = {direct.score:.3f}")

reasoned = score_reasoned(mock, DEFAULT_TEMPLATE, query, passage, sampling)
print(f"reason            R = {reasoned.score:.3f}   "
      f"({reasoned.traces[0].token_count} reasoning tokens)")

forced = score_forced(mock, DEFAULT_TEMPLATE, query, passage)
print(f"forced_no_reason  R = {forced.score:.3f}")

sc = score_self_consistency(mock, DEFAULT_TEMPLATE, query, passage, sampling,
                            n=8, base_seed=0)
print(f"self_consistency  R = {sc.score:.3f}   "
      f"(mean of {[round(s, 3) for s in sc.per_sample_scores]})")

print("\nreasoning trace from the reason strategy:")
print(" ", reasoned.traces[0].text)
