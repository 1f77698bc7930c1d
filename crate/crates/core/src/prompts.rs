//! Prompt templates. Defaults are compiled in; a directory of same-named
//! `.txt` files overrides any subset of them.

use std::fs;
use std::path::Path;

use crate::model::ModelError;

macro_rules! prompt_set {
    ($($field:ident),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct PromptSet {
            $(pub $field: String,)*
        }

        impl Default for PromptSet {
            fn default() -> Self {
                Self {
                    $($field: include_str!(concat!("../prompts/", stringify!($field), ".txt")).to_string(),)*
                }
            }
        }

        impl PromptSet {
            /// Defaults with every `<name>.txt` found in `dir` substituted.
            pub fn load_overrides(dir: &Path) -> Result<Self, ModelError> {
                let mut set = Self::default();
                $(
                    let path = dir.join(concat!(stringify!($field), ".txt"));
                    if path.is_file() {
                        set.$field = fs::read_to_string(&path)?;
                    }
                )*
                Ok(set)
            }
        }
    };
}

prompt_set!(
    codegen_system,
    device_control,
    integration,
    fixed_knowledge,
    testgen_system,
    testgen_basic,
    testgen_functionality,
    summarize,
    autodebug_system,
    autodebug_task,
    hil_system,
    hil_task,
    question_draft,
);

/// Replaces `{name}` placeholders. Unknown braces (code in templates) are
/// left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
