//! Text → image-schema classifier: cased word tokenizer, small BERT-style
//! encoder and a 14-way softmax head.

mod model;
mod sampling;
mod train;
mod vocab;

pub use model::{classify_schema, BertisArch, BertisModel, CHECKPOINT_KIND};
pub use sampling::{oversample, split_corpus, CorpusSplit};
pub use train::{accuracy, train_bertis, BertisConfig, BertisHistory, BertisTrainConfig};
pub use vocab::{build_vocab, split_words, tokenize, Vocabulary, CLS, MAX_LEN, PAD, SEP, SPECIALS, UNK};
