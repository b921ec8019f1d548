#include "kcp/prompts.hpp"

#include "kcp/text.hpp"

namespace kcp::prompts {

std::string parameter_answer(const std::string& title, const std::string& question) {
    return "This is a question about " + title + ". Please answer the question " + question +
           ". Please provide a direct answer without analysis. If you are unsure or do not know "
           "the answer, please respond with 'I don't know'.";
}

std::string counterfactual(const std::string& question, const std::string& a_real) {
    return "Please generate speciously plausible but incorrect answer to the question. Provide "
           "only the false answers; do not reiterate the queries.\n"
           "\n"
           "Question: What is the capital of France? Answer: Paris. Fake answer: Lyon.\n"
           "\n"
           "Question: What is the highest mountain in the world? Answer: Mount Everest. Fake "
           "answer: Lhotse.\n"
           "\n"
           "Question: Who is the founder of Microsoft? Answer: Bill Gates. Fake answer: Steve "
           "Jobs.\n"
           "\n"
           "Question: " +
           question + " Answer: " + a_real + " Fake answer:";
}

std::string contextual_ignorance(const std::string& title, const std::string& question) {
    return parameter_answer(title, question);
}

std::string contextual_overinclusion(const std::string& question, const std::string& potential_answer,
                                     const std::string& context) {
    return "Please select a word from the provided context as an alternative answer to this "
           "question.\n"
           "\n"
           "Question: " +
           question +
           "\n"
           "\n"
           "Potential answer: " +
           potential_answer +
           "\n"
           "\n"
           "Context: " +
           context +
           "\n"
           "\n"
           "Please follow these requirements:\n"
           "\n"
           "1. The answer must not be the same as the potential answer.\n"
           "\n"
           "2. The alternative answer does not need to be correct, but it must appear in the "
           "context.\n"
           "\n"
           "3. The alternative answer must be in a form that can answer the question and should "
           "be as reasonable as possible.";
}

std::string rag_instruction(const std::string& context, const std::string& question) {
    return "[Instruction] As a knowledge-based QA expert, you will provide professional "
           "responses based on user's question, utilizing any supplemental knowledge provided to "
           "enhance the quality of your response. If the supplemental information is irrelevant "
           "to the question, rely on your own expertise to formulate an answer. If you are "
           "unsure about the answer, please respond with 'I don't know'.\n"
           "\n"
           "[Supplemental Knowledge] " +
           context +
           "\n"
           "\n"
           "[User's Question] " +
           question +
           "\n"
           "\n"
           "[Answer]";
}

const std::vector<std::string>& refusal_phrases() {
    static const std::vector<std::string> phrases = {
        "i don't know",
        "i do not know",
        "i'm not sure",
        "cannot answer",
    };
    return phrases;
}

bool is_refusal(const std::string& response) {
    std::string lowered = to_lower(response);
    for (const std::string& phrase : refusal_phrases()) {
        if (lowered.find(phrase) != std::string::npos) return true;
    }
    return false;
}

}  // namespace kcp::prompts
