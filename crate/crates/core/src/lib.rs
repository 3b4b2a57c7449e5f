//! Out-of-vocabulary answering by transferring a task-conditional visual
//! classifier pretrained on tasks discovered in linguistic knowledge.

pub mod corpus;
pub mod eval;
pub mod lexical_graph;
pub mod model;
pub mod task_discovery;
pub mod text;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/word-groups.md")]
    mod word_groups {}
    #[doc = include_str!("../../../book/src/task-discovery.md")]
    mod task_discovery {}
    #[doc = include_str!("../../../book/src/micro-world.md")]
    mod micro_world {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    mod transfer {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
