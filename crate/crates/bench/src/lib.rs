//! Inputs for the micro-benchmarks.

/// The four benchmark queries.
pub const QUERIES: [&str; 4] = [
    "What is the expense reimbursement submission deadline?",
    "List three tasks for creating a project WBS.",
    "What is the height of Mount Fuji?",
    "What is the deadline for notifying the infrastructure team for a P-1 incident?",
];

const WORDS: &[&str] = &[
    "incident",
    "team",
    "notify",
    "within",
    "minutes",
    "report",
    "expense",
    "policy",
    "review",
    "owner",
    "escalation",
    "severity",
    "deadline",
    "receipt",
    "manager",
    "approval",
];

/// `n` synthetic documents of `len` words each, deterministic.
pub fn synthetic_corpus(n: usize, len: usize) -> Vec<(String, String)> {
    let mut state = 0x9e37_79b9_u64;
    (0..n)
        .map(|i| {
            let text = (0..len)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    WORDS[(state >> 33) as usize % WORDS.len()]
                })
                .collect::<Vec<_>>()
                .join(" ");
            (format!("mem://doc-{i:04}"), text)
        })
        .collect()
}
