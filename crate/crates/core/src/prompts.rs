//! Prompt templates sent to the base and teacher models.

use crate::domain::{Question, Task};

const MATH_SUFFIX: &str =
    "\n\nPlease reason step by step, and put your final answer within \\boxed{}.";
const CODE_SUFFIX: &str = "\n\nRead from standard input and write to standard output. \
Reason step by step, then give the complete program in a single fenced code block.";

pub fn render(question: &Question) -> String {
    let suffix = match question.task {
        Task::Math => MATH_SUFFIX,
        Task::Code => CODE_SUFFIX,
    };
    format!("{}{suffix}", question.prompt.trim_end())
}
