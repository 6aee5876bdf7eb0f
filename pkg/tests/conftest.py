from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from halspan.corpus import AnnotatedSpan, RagRecord


@pytest.fixture
def turkish_summary_record() -> RagRecord:
    """A translated summarization record shaped like the reference example:

    Turkish prompt/answer, two category-labeled spans at offsets (545, 596)
    and (824, 906), task Summary, split train, language tr.
    """
    base = (
        "Anne Frank Evi tarafından yapılan yeni bir araştırma, Anne Frank ve kız "
        "kardeşi Margot'un daha önce inanıldığından en az bir ay önce Bergen-Belsen "
        "toplama kampında ölmüş olabileceğini ortaya koydu. Araştırmacılar, Kızıl "
        "Haç, Uluslararası Eğitim Hizmeti ve Bergen-Belsen Anıtı arşivlerinin yanı "
        "sıra kurtulanların ifadelerini inceledi. "
    )
    filler = (
        "Tanıkların ifadeleri, kamptaki tifüs salgınının Şubat ayında başladığını "
        "ve koşulların hızla kötüleştiğini gösteriyor. "
    )
    answer = base
    while len(answer) < 940:
        answer += filler
    prompt = (
        "Aşağıdaki haberi 116 kelimeyle özetleyin: Yetmiş yıl önce Anne Frank, "
        "Nazi toplama kampında 15 yaşında tifo nedeniyle öldü. Ancak Anne Frank "
        "Evi tarafından yayınlanan yeni araştırmalar, Anne ve ablası Margot "
        "Frank'ın daha önce düşünüldüğünden en az bir ay önce öldüğünü gösteriyor."
    )
    return RagRecord(
        id="tr-summary-0001",
        task_type="Summary",
        split="train",
        language="tr",
        prompt=prompt,
        answer=answer,
        labels=(
            AnnotatedSpan(start=545, end=596, label="Evident Conflict"),
            AnnotatedSpan(start=824, end=906, label="Evident Baseless Info"),
        ),
    )
