//! Regenerates `fixtures/demo`: question files, mock scripts and configs for
//! an offline end-to-end run.
//!
//!   cargo run -p adacot --example make_demo_fixtures -- fixtures/demo
//!
//! Everything is derived from the question index, so reruns are identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adacot_core::domain::{DifficultyDistribution, DistributionKind, Question, TestCase};
use adacot_core::gateway::{MockScript, ScoreRule, ScorerScript};
use adacot_core::jsonl;

/// Step phrases the mock scorer keys on, L1 (best) to L5 (worst).
const PHRASES: [(&str, f64); 5] = [
    ("I double-checked every step", 0.9),
    ("this looks reasonable so far", 0.7),
    ("I am not completely sure", 0.5),
    ("there may be a slip here", 0.3),
    ("this is mostly a guess", 0.1),
];

/// Target base-model outcome: 0 = solved, 1..=5 = graded level.
fn math_plan(i: usize) -> usize {
    [0, 0, 1, 0, 2, 3, 0, 1, 4, 5][i % 10]
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

struct MathItem {
    question: Question,
    /// Correct answer as the model would box it.
    boxed: String,
    /// A wrong answer.
    wrong: String,
}

fn math_item(id: String, i: usize) -> MathItem {
    let a = 12 + (7 * i as i64) % 89;
    let b = 3 + (5 * i as i64) % 13;
    let c = 1 + (3 * i as i64) % 11;
    let (prompt, reference, boxed, wrong) = match i % 4 {
        0 => {
            let ans = a * b - c;
            (
                format!("Compute ${a} \\times {b} - {c}$."),
                ans.to_string(),
                // thousands separators where they apply
                if ans >= 1000 {
                    format!("{},{:03}", ans / 1000, ans % 1000)
                } else {
                    ans.to_string()
                },
                (ans + 1).to_string(),
            )
        }
        1 => {
            let (d1, d2) = (b + 1, c + 2);
            let (num, den) = (a * d2 + c * d1, d1 * d2);
            let g = gcd(num, den);
            (
                format!("Write $\\frac{{{a}}}{{{d1}}} + \\frac{{{c}}}{{{d2}}}$ as a single fraction in lowest terms."),
                format!("\\frac{{{}}}{{{}}}", num / g, den / g),
                // unreduced but equal
                format!("\\dfrac{{{num}}}{{{den}}}"),
                format!("\\frac{{{}}}{{{}}}", num / g + 1, den / g),
            )
        }
        2 => {
            let pct = 5 * (1 + i as i64 % 19);
            let base = 40 * b;
            let ans = pct * base;
            (
                format!("What is ${pct}\\%$ of ${base}$?"),
                format!("{}", ans as f64 / 100.0),
                format!("{:.2}", ans as f64 / 100.0),
                format!("{}", ans as f64 / 100.0 + 2.0),
            )
        }
        _ => {
            let x = 20 + (i as i64 * 11) % 60;
            let y = 30 + (i as i64 * 13) % 70;
            let z = 180 - x - y;
            (
                format!("Two angles of a triangle measure ${x}^\\circ$ and ${y}^\\circ$. What is the third angle, in degrees?"),
                format!("{z}^\\circ"),
                format!("{z}"),
                format!("{}^\\circ", z + 10),
            )
        }
    };
    MathItem {
        question: Question::math(id, prompt, reference).with_source("demo-math"),
        boxed,
        wrong,
    }
}

fn math_trace(plan: usize, item: &MathItem) -> String {
    if plan == 0 {
        return format!(
            "First, identify what is being asked.\n\nCarry out the arithmetic step by step.\n\nTherefore the answer is $\\boxed{{{}}}$.",
            item.boxed
        );
    }
    let p = PHRASES[plan - 1].0;
    format!(
        "Set up the computation; {p}.\n\nWork through the numbers; {p}.\n\nSo the answer is $\\boxed{{{}}}$, and {p}.",
        item.wrong
    )
}

struct CodeItem {
    question: Question,
    op: &'static str,
}

const CODE_TASKS: [(&str, &str); 4] = [
    ("the sum of a and b", "a + b"),
    ("the product of a and b", "a * b"),
    ("the larger of a and b", "max(a, b)"),
    ("a minus b", "a - b"),
];

fn code_item(id: String, i: usize) -> CodeItem {
    let (what, op) = CODE_TASKS[i % CODE_TASKS.len()];
    let tests = (0..5)
        .map(|k| {
            let a = 2 * k as i64 + 1;
            let b = (i as i64 + 3 * k as i64) % 7;
            let out = match i % CODE_TASKS.len() {
                0 => a + b,
                1 => a * b,
                2 => a.max(b),
                _ => a - b,
            };
            TestCase::new(format!("{a} {b}\n"), format!("{out}\n"))
        })
        .collect();
    CodeItem {
        question: Question::code(
            id,
            format!("Read two integers a and b from one line of standard input and print {what}."),
            tests,
        )
        .with_source("demo-code"),
        op,
    }
}

fn program(op: &str, passing: Option<usize>) -> String {
    match passing {
        None => format!("a, b = map(int, input().split())\nprint({op})\n"),
        // test k uses a = 2k + 1, so `a < 2p + 1` holds for exactly p tests
        Some(p) => format!(
            "a, b = map(int, input().split())\nprint({op} if a < {} else {op} + 1)\n",
            2 * p + 1
        ),
    }
}

fn code_trace(plan: usize, i: usize, item: &CodeItem) -> String {
    if plan == 0 {
        return format!(
            "Parse the two integers, then apply the operation.\n\n```python\n{}```\n",
            program(item.op, None)
        );
    }
    let p = PHRASES[plan - 1].0;
    if i % 13 == 5 {
        // no code block at all: an extraction error
        return format!("I would parse the input first; {p}.\n\nThen print the result; {p}.");
    }
    format!(
        "Parse the two integers; {p}.\n\nHandle the edge cases; {p}.\n\n```python\n{}```\n",
        program(item.op, Some(5 - plan))
    )
}

fn teacher_math(item: &MathItem) -> String {
    format!(
        "<think>\nRestate the problem.\n\nCompute carefully and check the result.\n</think>\nThe answer is $\\boxed{{{}}}$.",
        item.boxed
    )
}

fn teacher_code(item: &CodeItem) -> String {
    format!(
        "<think>\nRead a and b, then compute {}.\n</think>\n```python\n{}```\n",
        item.op,
        program(item.op, None)
    )
}

fn teacher_wrong_math(item: &MathItem) -> String {
    format!(
        "<think>\nA quick estimate.\n</think>\n$\\boxed{{{}}}$",
        item.wrong
    )
}

/// Teacher behaviour by index: mostly right first time, some right on the
/// second attempt, some never right, a few not scripted (backend error).
fn teacher_plan(i: usize) -> &'static str {
    if i % 29 == 7 {
        "missing"
    } else if i % 17 == 5 {
        "wrong"
    } else if i % 10 == 3 {
        "second"
    } else {
        "right"
    }
}

fn config(name: &str, method: &str, distribution: &str) -> String {
    format!(
        r#"# {name}: offline demo, run with
#   adacot --config fixtures/demo/{name}.toml --mock pipeline

[pipeline]
questions = ["questions_math.jsonl", "questions_code.jsonl"]
out_dir = "out/{name}"

[mock]
base = "mock/base.json"
teacher = "mock/teacher.json"
scorer = "mock/scorer.json"
base_model = "demo-base-7b"
teacher_model = "demo-teacher"

[grader]
method = "{method}"
workers = 8

[limits]
wall_time_ms = 2000
memory_mb = 256

[judge]
workers = 4

{distribution}
[sampler]
n = 100
seed = 17
shortfall = "redistribute"

[generator]
attempts = 2
temperature = 0.6
workers = 8
"#
    )
}

fn write_json(path: &Path, value: serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(&value).unwrap() + "\n").unwrap();
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/demo".into()),
    );
    fs::create_dir_all(dir.join("mock")).unwrap();

    let mut base = BTreeMap::new();
    let mut teacher = BTreeMap::new();

    let math: Vec<MathItem> = (0..160)
        .map(|i| math_item(format!("math-{i:03}"), i))
        .collect();
    for (i, item) in math.iter().enumerate() {
        let id = item.question.id.clone();
        base.insert(id.clone(), vec![math_trace(math_plan(i), item)]);
        let right = teacher_math(item);
        let script = match teacher_plan(i) {
            "missing" => continue,
            "wrong" => vec![teacher_wrong_math(item)],
            "second" => vec![teacher_wrong_math(item), right],
            _ => vec![right],
        };
        teacher.insert(id, script);
    }

    let code: Vec<CodeItem> = (0..40)
        .map(|i| code_item(format!("code-{i:03}"), i))
        .collect();
    for (i, item) in code.iter().enumerate() {
        let id = item.question.id.clone();
        base.insert(id.clone(), vec![code_trace(i % 6, i, item)]);
        if teacher_plan(i) != "missing" {
            teacher.insert(id, vec![teacher_code(item)]);
        }
    }

    // evaluation set: a skewed, known label mix
    let eval_plan = [(0, 21), (1, 12), (2, 9), (3, 8), (4, 6), (5, 4)];
    let mut eval = Vec::new();
    let mut k = 0;
    for (plan, count) in eval_plan {
        for _ in 0..count {
            let item = math_item(format!("eval-{k:03}"), 1000 + k);
            base.insert(item.question.id.clone(), vec![math_trace(plan, &item)]);
            eval.push(item.question);
            k += 1;
        }
    }

    let mut code_questions: Vec<Question> = code.iter().map(|c| c.question.clone()).collect();
    // one repeated id, dropped at ingest with a warning
    code_questions.push(math[0].question.clone());

    let math_questions: Vec<Question> = math.into_iter().map(|m| m.question).collect();
    jsonl::write_jsonl(&dir.join("questions_math.jsonl"), &math_questions).unwrap();
    jsonl::write_jsonl(&dir.join("questions_code.jsonl"), &code_questions).unwrap();
    jsonl::write_jsonl(&dir.join("eval_questions.jsonl"), &eval).unwrap();

    write_json(
        &dir.join("mock/base.json"),
        serde_json::to_value(MockScript {
            responses: base,
            ..MockScript::default()
        })
        .unwrap(),
    );
    write_json(
        &dir.join("mock/teacher.json"),
        serde_json::to_value(MockScript {
            responses: teacher,
            ..MockScript::default()
        })
        .unwrap(),
    );
    write_json(
        &dir.join("mock/scorer.json"),
        serde_json::to_value(ScorerScript {
            rules: PHRASES
                .iter()
                .map(|(p, s)| ScoreRule {
                    contains: p.to_string(),
                    score: *s,
                })
                .collect(),
            default: Some(0.5),
            by_question: BTreeMap::new(),
        })
        .unwrap(),
    );
    jsonl::write_json(
        &dir.join("other_model_distribution.json"),
        &DifficultyDistribution {
            kind: DistributionKind::Eval,
            probs: [0.5, 0.2, 0.1, 0.1, 0.05, 0.05],
        },
    )
    .unwrap();

    let eval_dist =
        "[distribution]\nmode = \"eval\"\neval_questions = [\"eval_questions.jsonl\"]\n";
    let curriculum =
        "[distribution]\nmode = \"curriculum\"\nweights = [5, 4, 3, 2, 1]\neasy_weight = 0\n";
    let external =
        "[distribution]\nmode = \"external\"\npath = \"other_model_distribution.json\"\n";
    for (name, method, dist) in [
        ("demo", "prm", eval_dist),
        ("demo-ut", "ut", eval_dist),
        ("demo-curriculum", "prm", curriculum),
        ("demo-external", "prm", external),
    ] {
        fs::write(dir.join(format!("{name}.toml")), config(name, method, dist)).unwrap();
    }
    println!("wrote demo fixtures to {}", dir.display());
}
