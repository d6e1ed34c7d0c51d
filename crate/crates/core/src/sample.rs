//! Deterministic synthetic Persian text for smoke tests, benchmarks and demos.
//!
//! Words are drawn from a fixed lexicon with a Zipf-like skew, so BPE finds
//! realistic merge structure. A small share of words use Arabic letter
//! variants and Arabic-Indic digits so the normalizer has work to do.

use rand::Rng;

use crate::rng::keyed_rng;

const LEXICON: &[&str] = &[
    "و",
    "در",
    "به",
    "از",
    "که",
    "این",
    "را",
    "با",
    "است",
    "برای",
    "آن",
    "یک",
    "خود",
    "تا",
    "کرد",
    "بر",
    "هم",
    "نیز",
    "گفت",
    "شده",
    "می‌شود",
    "شد",
    "دارد",
    "ما",
    "اما",
    "باید",
    "او",
    "سال",
    "پس",
    "کشور",
    "ایران",
    "تهران",
    "مردم",
    "کار",
    "روز",
    "دولت",
    "امروز",
    "زبان",
    "فارسی",
    "کتاب",
    "خانه",
    "شهر",
    "آب",
    "هوا",
    "خوب",
    "بزرگ",
    "کوچک",
    "جدید",
    "دانشگاه",
    "دانشجو",
    "مدرسه",
    "معلم",
    "علم",
    "پژوهش",
    "مدل",
    "داده",
    "متن",
    "زبان‌شناسی",
    "رایانه",
    "شبکه",
    "اینترنت",
    "فناوری",
    "اقتصاد",
    "بازار",
    "قیمت",
    "تومان",
    "ریال",
    "خبر",
    "گزارش",
    "رسانه",
    "فیلم",
    "موسیقی",
    "هنر",
    "تاریخ",
    "فرهنگ",
    "ادبیات",
    "شعر",
    "حافظ",
    "سعدی",
    "فردوسی",
    "مولوی",
    "شاهنامه",
    "دیوان",
    "غزل",
    "باران",
    "برف",
    "کوه",
    "دریا",
    "جنگل",
    "خیابان",
    "ماشین",
    "قطار",
    "هواپیما",
    "سفر",
    "مسافر",
    "راه",
    "می‌خواهم",
    "می‌روم",
    "می‌آید",
    "نوشته",
    "خواندن",
    "نوشتن",
    "گفتگو",
    "پرسش",
    "پاسخ",
    "درست",
    "غلط",
    "مهم",
    "ساده",
    "سخت",
    "آسان",
    "زیبا",
    "دوست",
    "خانواده",
    "پدر",
    "مادر",
    "برادر",
    "خواهر",
    "کودک",
    "جوان",
    "پیر",
    "زندگی",
    "سلامت",
    "بیمارستان",
    "پزشک",
    "دارو",
    "غذا",
    "نان",
    "برنج",
    "چای",
    "قهوه",
    "میوه",
    "سیب",
    "انار",
    "پسته",
    "ورزش",
    "فوتبال",
    "تیم",
    "بازی",
    "برنده",
    "جهان",
    "آینده",
    "گذشته",
    "اکنون",
    "همیشه",
    "هرگز",
    "شاید",
    "چرا",
    "چگونه",
    "کجا",
    "چه",
    "کدام",
    "همه",
    "هیچ",
    "بسیار",
    "کمی",
    "بیشتر",
    "کمتر",
    "بهترین",
    "نخستین",
    "پایان",
    "آغاز",
    "میان",
    "پیش",
];

const ARABIC_VARIANTS: &[&str] = &["علي", "كتاب", "يك", "مدرسة", "كشور", "ديروز", "ٱلكتاب"];
const ARABIC_DIGITS: &[&str] = &["١٢", "٣٤٥", "٢٠٢٣", "٧"];
const PERSIAN_DIGITS: &[&str] = &["۱۴۰۲", "۲۵", "۳", "۱۰۰"];
const SENTENCE_END: &[&str] = &[".", ".", ".", "؟", "!", "."];

fn zipf_index(rng: &mut impl Rng, n: usize) -> usize {
    // Inverse-CDF of a continuous 1/x density over [1, n+1).
    let u: f64 = rng.gen();
    let x = ((n as f64 + 1.0).ln() * u).exp();
    (x as usize - 1).min(n - 1)
}

fn sentence(rng: &mut impl Rng, out: &mut String) {
    let words = rng.gen_range(4..18);
    for i in 0..words {
        if i > 0 {
            out.push(' ');
        }
        let roll: f64 = rng.gen();
        let w = if roll < 0.02 {
            ARABIC_VARIANTS[rng.gen_range(0..ARABIC_VARIANTS.len())]
        } else if roll < 0.03 {
            ARABIC_DIGITS[rng.gen_range(0..ARABIC_DIGITS.len())]
        } else if roll < 0.05 {
            PERSIAN_DIGITS[rng.gen_range(0..PERSIAN_DIGITS.len())]
        } else {
            LEXICON[zipf_index(rng, LEXICON.len())]
        };
        out.push_str(w);
        if i + 1 < words && rng.gen_bool(0.08) {
            out.push('،');
        }
    }
    out.push_str(SENTENCE_END[rng.gen_range(0..SENTENCE_END.len())]);
}

/// One document of a few sentences.
pub fn persian_document(seed: u64, index: u64) -> String {
    let mut rng = keyed_rng(seed, &[index]);
    let mut out = String::new();
    for i in 0..rng.gen_range(1..6) {
        if i > 0 {
            out.push(' ');
        }
        sentence(&mut rng, &mut out);
    }
    out
}

pub fn persian_corpus(docs: usize, seed: u64) -> Vec<String> {
    (0..docs as u64).map(|i| persian_document(seed, i)).collect()
}

/// Documents (one per line when joined with `\n`) totalling at least `bytes`.
pub fn persian_corpus_of_size(bytes: usize, seed: u64) -> Vec<String> {
    let mut out = Vec::new();
    let mut total = 0;
    let mut i = 0;
    while total < bytes {
        let d = persian_document(seed, i);
        total += d.len() + 1;
        out.push(d);
        i += 1;
    }
    out
}
