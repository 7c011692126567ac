//! Keeps the guide honest: every chapter under `book/src` is a module doc
//! here, so `cargo test` compiles and runs its code samples.

macro_rules! chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub mod $name {}
        )*
    };
}

chapters! {
    introduction => "introduction.md",
    late_interaction => "late-interaction.md",
    passages => "passages.md",
    token_index => "token-index.md",
    retrieval => "retrieval.md",
    feedback => "feedback.md",
    queries => "queries.md",
    evaluation => "evaluation.md",
    cli => "cli.md",
}
